import math

import pytest

import mrnav


def test_bundled_worlds_load():
    w = mrnav.load_world("four_rooms")
    assert w.recommended_agents == 12
    assert len(w.segments) > 4
    again = mrnav.parse_world(mrnav.serialize_world(w))
    assert len(again.nodes) == len(w.nodes)


def test_bad_world_raises():
    with pytest.raises(ValueError):
        mrnav.parse_world('{"segments": [[0, 0, 1]]}')


def test_terminal_rewards():
    f = mrnav.TransitionFacts()
    f.prev_goal_distance, f.goal_distance = 3.0, 2.0
    f.heading = (1.0, 0.0)
    f.goal_vector = (2.0, 0.0)
    f.min_laser = 1.0
    state = mrnav.RewardState.start(3.0)
    want = {
        mrnav.TerminalCause.goal: 1.0,
        mrnav.TerminalCause.world_collision: -0.75,
        mrnav.TerminalCause.robot_collision: -1.0,
        mrnav.TerminalCause.timeout: 0.0,
    }
    for cause, value in want.items():
        f.terminal = cause
        assert mrnav.compute_reward(f, state)[0] == value


def test_dense_reward_sum():
    f = mrnav.TransitionFacts()
    f.prev_goal_distance, f.goal_distance = 3.0, 2.9
    f.heading = (1.0, 0.0)
    f.goal_vector = (2.9, 0.0)
    f.min_laser = 2.0
    r, nxt = mrnav.compute_reward(f, mrnav.RewardState.start(3.0))
    # distance 0.1 * 0.01, facing the goal 0.001, new best distance 0.1 * 0.05
    assert r == pytest.approx(0.001 + 0.001 + 0.005, abs=1e-12)
    assert nxt.shortest_distance == pytest.approx(2.9)


def test_kinematics_straight():
    s = mrnav.AgentState()
    n = mrnav.integrate_pose(s, mrnav.Action(0.6, 0.0), 0.1)
    assert n.position.x == pytest.approx(0.06)
    assert n.heading == 0.0


def test_episode_runs_to_a_terminal_state():
    world = mrnav.load_world("corridor")
    sim = mrnav.SimConfig()
    sim.face_goal = True
    ep = mrnav.Episode(world, sim, seed=3)
    ep.reset([mrnav.ScenarioTask(0, 1)])
    last = None
    while not ep.done():
        out = ep.step([(i, mrnav.Action(0.6, 0.0)) for i in ep.active_agents()])
        last = out[0]
        assert len(last["lidar"]) == 1081
    assert last["cause"] == mrnav.TerminalCause.goal
    assert last["reward"] == 1.0
    assert ep.agents()[0].status == mrnav.AgentStatus.reached_goal


def test_plan_and_unreachable_goal():
    w = mrnav.load_world("corridor")
    p = mrnav.plan(w, w.nodes[0], w.nodes[1])
    straight = math.dist(tuple(w.nodes[0]), tuple(w.nodes[1]))
    assert straight <= p["length"] <= straight + 0.2
    sealed = mrnav.load_world("sealed_goal")
    assert mrnav.plan(sealed, sealed.nodes[0], sealed.nodes[1]) is None


def test_evaluate_scripted_policy():
    rep = mrnav.evaluate(["open_room"], policy="spin", episodes=4, max_steps=30, seed=1)
    row = rep["rows"][0]
    assert row["episodes"] == 4
    assert row["timed_out"] == 4
    with pytest.raises(ValueError):
        mrnav.evaluate(["open_room"], policy="network")


def test_train_and_config_hash(tmp_path):
    cfg = {
        "algorithm": "ppo",
        "seed": 2,
        "worlds": [{"file": "open_room", "agents": 1, "copies": 2}],
        "sim": {"lidar_beams": 61, "max_steps": 20},
        "train": {"rollout_length": 8, "minibatch_size": 16, "epochs": 1, "threads": 1},
        "stop": {"max_updates": 1},
    }
    h = mrnav.config_hash(cfg)
    assert len(h) == 16
    s = mrnav.train(cfg, out=str(tmp_path / "run"))
    assert s["updates"] == 1
    assert s["config_hash"] == h
    rep = mrnav.evaluate(["open_room"], checkpoint=s["final_checkpoint"], episodes=2, max_steps=10, config=cfg)
    assert rep["config_hash"] == h


def test_unknown_config_key():
    with pytest.raises(ValueError):
        mrnav.config_hash({"worlds": ["tube"], "bogus": 1})
