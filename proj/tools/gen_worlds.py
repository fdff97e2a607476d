#!/usr/bin/env python3
"""Writes the bundled scenario files into worlds/.

Coordinates are in meters. Obstacles are closed outlines; the free space is
inside the outer boundary and outside every obstacle. Layouts are
reconstructions of the schematic figures, not measured maps.

    python3 tools/gen_worlds.py [--out worlds]
"""
import argparse
import json
import math
from pathlib import Path

CLEARANCE = 0.5   # node to wall, leaves room for the planner's inflation band
SPACING = 0.8     # node to node


def rect(x0, y0, x1, y1):
    return [[x0, y0, x1, y0], [x1, y0, x1, y1], [x1, y1, x0, y1], [x0, y1, x0, y0]]


def polygon(points):
    return [[*points[i], *points[(i + 1) % len(points)]] for i in range(len(points))]


def seg_dist(p, s):
    ax, ay, bx, by = s
    dx, dy = bx - ax, by - ay
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / (dx * dx + dy * dy)
    t = max(0.0, min(1.0, t))
    return math.hypot(ax + t * dx - p[0], ay + t * dy - p[1])


def inside(p, segments):
    # even-odd test with a slanted ray
    d = (math.cos(0.3183), math.sin(0.3183))
    n = 0
    for ax, ay, bx, by in segments:
        ex, ey = bx - ax, by - ay
        den = d[0] * ey - d[1] * ex
        if den == 0:
            continue
        wx, wy = ax - p[0], ay - p[1]
        t = (wx * ey - wy * ex) / den
        u = (wx * d[1] - wy * d[0]) / den
        if t > 0 and 0 <= u <= 1:
            n += 1
    return n % 2 == 1


def grid_nodes(segments, x0, y0, x1, y1, step, existing=()):
    nodes = list(existing)
    y = y0
    while y <= y1 + 1e-9:
        x = x0
        while x <= x1 + 1e-9:
            p = (round(x, 3), round(y, 3))
            if (inside(p, segments) and all(seg_dist(p, s) >= CLEARANCE for s in segments)
                    and all(math.hypot(p[0] - q[0], p[1] - q[1]) >= SPACING for q in nodes)):
                nodes.append(p)
            x += step
        y += step
    return nodes


def world(name, segments, nodes, agents, tasks=None):
    for p in nodes:
        assert inside(p, segments), (name, p)
        assert all(seg_dist(p, s) >= CLEARANCE - 1e-9 for s in segments), (name, p)
    w = {"name": name, "recommended_agents": agents,
         "segments": [[round(v, 4) for v in s] for s in segments],
         "nodes": [[round(v, 4) for v in p] for p in nodes]}
    if tasks:
        w["tasks"] = tasks
    return w


def tube():
    # bent corridor, 2 m wide
    outer = polygon([(0, 0), (12, 0), (12, 8), (10, 8), (10, 2), (0, 2)])
    nodes = [(1, 1), (3, 1), (5, 1), (7, 1), (9, 1), (11, 1), (11, 3), (11, 5), (11, 7)]
    return world("tube", outer, nodes, 2)


def room():
    segs = rect(0, 0, 8, 8) + rect(2.5, 2.5, 3.5, 3.5) + rect(4.5, 4.5, 5.5, 5.5)
    return world("room", segs, grid_nodes(segs, 1, 1, 7, 7, 1.5), 5)


def four_rooms():
    s = 12.0
    segs = rect(0, 0, s, s)
    # cross-shaped inner walls with one door per wall segment, as thin boxes
    w = 0.1
    segs += rect(5.95, 0, 6.05, 2.0) + rect(5.95, 3.2, 6.05, 8.8) + rect(5.95, 10.0, 6.05, s)
    segs += rect(0, 5.95, 2.0, 6.05) + rect(3.2, 5.95, 5.95, 6.05)
    segs += rect(6.05, 5.95, 8.8, 6.05) + rect(10.0, 5.95, s, 6.05)
    del w
    nodes = []
    for cx, cy in [(3, 3), (9, 3), (3, 9), (9, 9)]:
        for dx, dy in [(-1.5, -1.5), (1.5, -1.5), (-1.5, 1.5), (1.5, 1.5)]:
            nodes.append((cx + dx, cy + dy))
    return world("four_rooms", segs, nodes, 12)


def hall():
    segs = rect(0, 0, 18, 10)
    for x in (4.5, 9, 13.5):
        for y in (3.3, 6.7):
            segs += rect(x - 0.3, y - 0.3, x + 0.3, y + 0.3)
    return world("hall", segs, grid_nodes(segs, 1, 1, 17, 9, 2.0), 16)


def roblab():
    segs = rect(0, 0, 14, 10)
    # tables and a partition with an opening
    segs += rect(2, 2, 4, 3) + rect(2, 7, 4, 8) + rect(10, 2, 12, 3) + rect(10, 7, 12, 8)
    segs += rect(6.9, 0, 7.1, 3.5) + rect(6.9, 6.5, 7.1, 10)
    nodes = grid_nodes(segs, 1, 1, 13, 9, 1.6)
    return world("roblab", segs, nodes, 14)


def swap():
    # two columns of eight robots exchange sides
    segs = rect(0, 0, 12, 11)
    left = [(1.5, 1.5 + 1.15 * i) for i in range(8)]
    right = [(10.5, 1.5 + 1.15 * i) for i in range(8)]
    nodes = left + right
    tasks = [[i, 8 + i] for i in range(8)] + [[8 + i, i] for i in range(8)]
    return world("swap", segs, nodes, 16, tasks)


def intersection():
    # plus-shaped corridors, 4 m wide; robots cross to the opposite arm
    a, b, L = 5.0, 9.0, 14.0
    outer = polygon([(a, 0), (b, 0), (b, a), (L, a), (L, b), (b, b), (b, L), (a, L), (a, b), (0, b), (0, a), (a, a)])
    south = [(5.8, 1.0), (7.0, 1.0), (8.2, 1.0), (7.0, 2.2)]
    north = [(x, L - y) for x, y in south]
    west = [(y, x) for x, y in south]
    east = [(L - y, x) for x, y in south]
    nodes = south + north + west + east
    tasks = []
    for i in range(4):
        tasks.append([i, 4 + i])
        tasks.append([4 + i, i])
        tasks.append([8 + i, 12 + i])
        tasks.append([12 + i, 8 + i])
    # with 8 agents the first 8 tasks use two robots per arm
    return world("intersection", outer, nodes, 16, tasks)


def bottleneck():
    # two rooms joined by a 1.2 m door
    segs = polygon([(0, 0), (6, 0), (6, 3.4), (6.4, 3.4), (6.4, 0), (12, 0), (12, 8), (6.4, 8),
                    (6.4, 4.6), (6, 4.6), (6, 8), (0, 8)])
    left = [(1.5, 1.5), (1.5, 4.0), (1.5, 6.5), (3.5, 1.5), (3.5, 4.0), (3.5, 6.5), (5.0, 2.5), (5.0, 5.5)]
    right = [(12 - x, y) for x, y in left]
    nodes = left + right
    tasks = []
    for i in range(8):
        tasks.append([i, 8 + i] if i % 2 == 0 else [8 + i, i])
    return world("bottleneck", segs, nodes, 8, tasks)


def constriction():
    # corridor narrowing from 4 m to 1.4 m
    outer = polygon([(0, 0), (5, 0), (6.5, 1.3), (8.5, 1.3), (10, 0), (15, 0),
                     (15, 4), (10, 4), (8.5, 2.7), (6.5, 2.7), (5, 4), (0, 4)])
    left = [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (2.2, 1.0), (2.2, 2.0), (2.2, 3.0), (3.4, 1.5), (3.4, 2.5)]
    right = [(15 - x, y) for x, y in left]
    nodes = left + right
    tasks = [[i, 8 + i] for i in range(4)] + [[8 + i, i] for i in range(4, 8)]
    return world("constriction", outer, nodes, 8, tasks)


def multi():
    # large mixed world: open area, rooms and a corridor
    segs = rect(0, 0, 24, 16)
    segs += rect(7.9, 0, 8.1, 6) + rect(7.9, 8, 8.1, 16)
    segs += rect(16, 5, 17, 6) + rect(19, 10, 20, 11) + rect(12, 11.5, 13, 12.5)
    segs += rect(2, 7.9, 5.5, 8.1)
    segs += polygon([(11, 3), (13, 3), (12, 5)])
    nodes = grid_nodes(segs, 1, 1, 23, 15, 2.0)
    return world("multi", segs, nodes, 24)


def open_room():
    segs = rect(0, 0, 8, 8)
    nodes = [(1.25 + 1.8333 * i, 1.25 + 1.8333 * j) for j in range(4) for i in range(4)]
    return world("open_room", segs, nodes, 1)


def swap_corridor():
    segs = rect(0, 0, 6, 2.6)
    return world("swap_corridor", segs, [(0.8, 1.3), (5.2, 1.3)], 2, [[0, 1], [1, 0]])


def corridor():
    segs = rect(0, 0, 12, 2)
    return world("corridor", segs, [(1, 1), (11, 1)], 1, [[0, 1]])


def sealed_goal():
    # the goal sits in a separate closed box: unreachable
    segs = rect(0, 0, 6, 4) + rect(7, 0, 9, 2)
    return world("sealed_goal", segs, [(1, 2), (8, 1)], 1, [[0, 1]])


def square():
    return world("square", rect(0, 0, 4, 4), [(1, 1), (3, 3)], 1)


ALL = [tube, room, four_rooms, hall, roblab, swap, intersection, bottleneck, constriction, multi,
       open_room, swap_corridor, corridor, sealed_goal, square]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "worlds"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for make in ALL:
        w = make()
        (out / f"{w['name']}.json").write_text(json.dumps(w, indent=1) + "\n")
        print(f"{w['name']}: {len(w['segments'])} segments, {len(w['nodes'])} nodes")


if __name__ == "__main__":
    main()
