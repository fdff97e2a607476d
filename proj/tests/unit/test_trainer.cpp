#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mrnav/error.hpp"
#include "mrnav/harness.hpp"
#include "mrnav/trainer.hpp"
#include "support/checks.hpp"

using namespace mrnav;

namespace {

// Random inputs, actions drawn from the network itself, so the recorded
// log-probs are those of the current parameters.
RolloutBatch synthetic_batch(const PolicyNetwork<float>& net, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto& shape = net.shape();
  RolloutBatch b;
  b.inputs = Matrix<float>(static_cast<Eigen::Index>(shape.input_size()), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = static_cast<float>(n01(rng));
  const auto out = net.forward(b.inputs);
  for (std::size_t k = 0; k < n; ++k) {
    const auto s = sample_action(distribution_at(out, k, shape.head), rng);
    b.actions.push_back(s.index);
    b.raw_actions.push_back(s.raw);
    b.old_log_probs.push_back(s.log_prob);
    b.old_values.push_back(out.value(0, static_cast<Eigen::Index>(k)));
    b.advantages.push_back(n01(rng));
    b.returns.push_back(n01(rng));
  }
  return b;
}

PolicyNetwork<float> small_net(HeadKind head, std::uint64_t seed) {
  PolicyNetwork<float> net(NetworkShape::reduced(8, head));
  Rng rng = make_rng(seed);
  net.initialize(rng);
  // Larger heads than the default init so the policy is far from uniform.
  std::normal_distribution<float> n01(0.0f, 0.3f);
  const auto& t = net.tensor("policy.weight");
  for (std::size_t i = 0; i < t.size(); ++i) net.parameters()[t.offset + i] = n01(rng);
  return net;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Gae, SingleTerminalStep) {
  const double r[] = {1.0}, v[] = {0.0};
  const std::uint8_t d[] = {1};
  const auto g = compute_gae(r, v, d, 5.0, 0.99, 0.95);
  EXPECT_EQ(g.advantages[0], 1.0);
  EXPECT_EQ(g.returns[0], 1.0);
}

TEST(Gae, LambdaOneIsMonteCarloMinusValue) {
  const std::vector<double> r{0.5, -0.2, 0.1, 0.7}, v{0.3, 0.1, -0.4, 0.2};
  const std::vector<std::uint8_t> d(4, 0);
  const double boot = 0.9, gamma = 0.9;
  const auto g = compute_gae(r, v, d, boot, gamma, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    double ret = 0, w = 1;
    for (std::size_t k = t; k < 4; ++k, w *= gamma) ret += w * r[k];
    ret += w * boot;
    EXPECT_NEAR(g.advantages[t], ret - v[t], 1e-14);
  }
}

TEST(Gae, MatchesBruteForce) { EXPECT_LT(checks::gae_max_error(500, 5), 1e-10); }

TEST(Batch, AdvantagesNormalizedPerBatch) {
  TrainConfig cfg;
  std::vector<Trajectory> trajs(3);
  Rng rng = make_rng(2);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& t : trajs) {
    for (int k = 0; k < 10; ++k) {
      Transition tr;
      tr.input.assign(4, 0.0f);
      tr.reward = n01(rng);
      tr.value = n01(rng);
      tr.done = k == 9;
      t.steps.push_back(tr);
    }
  }
  const auto b = make_batch(trajs, cfg, 4);
  ASSERT_EQ(b.size(), 30u);
  double mean = 0, sq = 0;
  for (double a : b.advantages) mean += a / 30;
  for (double a : b.advantages) sq += (a - mean) * (a - mean) / 30;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq, 1.0, 1e-6);
  EXPECT_THROW(make_batch(trajs, cfg, 5), ShapeError);
}

TEST(Ppo, RatioIsOneAtCollection) {
  for (HeadKind h : {HeadKind::discrete, HeadKind::continuous}) {
    const auto net = small_net(h, 1);
    const auto b = synthetic_batch(net, 64, 3);
    const auto idx = iota(64);
    const auto st = policy_loss(net, b, idx, TrainConfig{}, PolicyObjective::clipped_surrogate, {});
    EXPECT_NEAR(st.mean_ratio, 1.0, 1e-6);
    EXPECT_EQ(st.clip_fraction, 0.0);
    EXPECT_NEAR(st.approx_kl, 0.0, 1e-9);
  }
}

TEST(Ppo, SurrogateAtRatioOneIsMeanAdvantage) {
  const auto net = small_net(HeadKind::discrete, 2);
  const auto b = synthetic_batch(net, 50, 4);
  const auto idx = iota(50);
  const auto st = policy_loss(net, b, idx, TrainConfig{}, PolicyObjective::clipped_surrogate, {});
  const double mean_adv = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / 50;
  EXPECT_NEAR(-st.policy_loss, mean_adv, 1e-5);
}

TEST(Ppo, ClippedSampleHasNoPolicyGradient) {
  const auto net = small_net(HeadKind::discrete, 3);
  auto b = synthetic_batch(net, 1, 5);
  b.advantages[0] = 2.0;
  b.old_log_probs[0] -= std::log(1.5);  // rho = 1.5
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  std::vector<float> g(net.parameter_count(), 0.0f);
  const std::size_t idx[] = {0};
  const auto st = policy_loss(net, b, idx, cfg, PolicyObjective::clipped_surrogate, g);
  EXPECT_NEAR(st.mean_ratio, 1.5, 1e-5);
  EXPECT_NEAR(-st.policy_loss, 1.2 * 2.0, 1e-12);
  EXPECT_EQ(st.clip_fraction, 1.0);
  EXPECT_EQ(norm(g), 0.0);
}

TEST(Ppo, ClippedTermBounded) {
  const auto net = small_net(HeadKind::discrete, 4);
  auto b = synthetic_batch(net, 200, 6);
  Rng rng = make_rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& lp : b.old_log_probs) lp += u(rng);
  TrainConfig cfg;
  for (std::size_t i = 0; i < 200; ++i) {
    const std::size_t idx[] = {i};
    const auto st = policy_loss(net, b, idx, cfg, PolicyObjective::clipped_surrogate, {});
    // The surrogate is a pessimistic bound: never above the clipped term,
    // whose magnitude is at most (1 + eps)|A|.
    const double clipped = std::clamp(st.mean_ratio, 1 - cfg.clip_epsilon, 1 + cfg.clip_epsilon) * b.advantages[i];
    EXPECT_LE(std::abs(clipped), (1 + cfg.clip_epsilon) * std::abs(b.advantages[i]) + 1e-12);
    EXPECT_LE(-st.policy_loss, clipped + 1e-12);
  }
}

TEST(Ppo, UpdateIncreasesSurrogate) {
  for (HeadKind h : {HeadKind::discrete, HeadKind::continuous}) {
    OnPolicyLearner learner(small_net(h, 5));
    const auto b = synthetic_batch(learner.net, 256, 7);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.entropy_coef = 0.0;
    cfg.value_coef = 0.0;
    cfg.epochs = 1;
    cfg.minibatch_size = 256;
    const auto idx = iota(256);
    const double before = policy_loss(learner.net, b, idx, cfg, PolicyObjective::clipped_surrogate, {}).policy_loss;
    Rng rng = make_rng(1);
    ppo_update(learner, b, cfg, rng);
    const double after = policy_loss(learner.net, b, idx, cfg, PolicyObjective::clipped_surrogate, {}).policy_loss;
    EXPECT_LT(after, before);
  }
}

TEST(A2c, GradientEqualsPpoAtSnapshot) {
  for (HeadKind h : {HeadKind::discrete, HeadKind::continuous}) {
    const auto net = small_net(h, 6);
    const auto b = synthetic_batch(net, 40, 8);
    const auto idx = iota(40);
    const TrainConfig cfg;
    std::vector<float> ga(net.parameter_count(), 0.0f), gp(net.parameter_count(), 0.0f);
    policy_loss(net, b, idx, cfg, PolicyObjective::vanilla, ga);
    policy_loss(net, b, idx, cfg, PolicyObjective::clipped_surrogate, gp);
    double diff = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) diff = std::max(diff, double(std::abs(ga[i] - gp[i])));
    EXPECT_LT(diff, 1e-5 * std::max(1.0, norm(ga)));
  }
}

TEST(A2c, ZeroAdvantagesGiveNoPolicyGradient) {
  const auto net = small_net(HeadKind::discrete, 7);
  auto b = synthetic_batch(net, 30, 9);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  std::vector<float> g(net.parameter_count(), 0.0f);
  const auto idx = iota(30);
  policy_loss(net, b, idx, cfg, PolicyObjective::vanilla, g);
  EXPECT_EQ(norm(g), 0.0);
}

TEST(A2c, ValueRegressionConvergesMonotonically) {
  OnPolicyLearner learner(small_net(HeadKind::discrete, 8));
  auto b = synthetic_batch(learner.net, 128, 10);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.learning_rate = 1e-3;
  const auto idx = iota(128);
  double prev = policy_loss(learner.net, b, idx, cfg, PolicyObjective::vanilla, {}).value_loss;
  const double first = prev;
  for (int k = 0; k < 100; ++k) {
    a2c_update(learner, b, cfg);
    const double now = policy_loss(learner.net, b, idx, cfg, PolicyObjective::vanilla, {}).value_loss;
    EXPECT_LE(now, prev + 1e-9) << "step " << k;
    prev = now;
  }
  EXPECT_LT(prev, first);
}

TEST(Update, EmptyBatchRejected) {
  OnPolicyLearner learner(small_net(HeadKind::discrete, 9));
  RolloutBatch empty;
  Rng rng = make_rng(0);
  EXPECT_THROW(ppo_update(learner, empty, TrainConfig{}, rng), ContractError);
  EXPECT_THROW(a2c_update(learner, empty, TrainConfig{}), ContractError);
}

TEST(Config, PublishedDefaults) {
  const auto p = TrainConfig::for_algorithm(Algorithm::ppo);
  EXPECT_EQ(p.learning_rate, 3e-4);
  EXPECT_EQ(p.gamma, 0.99);
  EXPECT_EQ(p.gae_lambda, 0.95);
  EXPECT_EQ(p.clip_epsilon, 0.2);
  EXPECT_EQ(p.minibatch_size, 4096u);
  EXPECT_EQ(p.rollout_length, 64u);
  const auto d = TrainConfig::for_algorithm(Algorithm::ddqn);
  EXPECT_EQ(d.learning_rate, 5e-5);
  EXPECT_EQ(d.gamma, 0.95);
  EXPECT_EQ(d.batch_size, 64u);
  EXPECT_EQ(d.target_update_interval, 250u);
  TrainConfig bad = p;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.gae_lambda = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_algorithm("sac"), ConfigError);
  EXPECT_EQ(parse_algorithm("a2c"), Algorithm::a2c);
}

// ---------------------------------------------------------------------------

TEST(Replay, CapacityAndFifo) {
  ReplayBuffer rb(5);
  for (std::size_t i = 0; i < 12; ++i) {
    ReplayEntry e;
    e.action = i;
    rb.push(e);
    EXPECT_LE(rb.size(), 5u);
  }
  EXPECT_EQ(rb.size(), 5u);
  EXPECT_EQ(rb.pushes(), 12u);
  std::set<std::size_t> kept;
  for (std::size_t i = 0; i < rb.size(); ++i) kept.insert(rb.at(i).action);
  EXPECT_EQ(kept, (std::set<std::size_t>{7, 8, 9, 10, 11}));
}

TEST(Replay, UniformSamplingChiSquare) {
  const std::size_t cap = 50;
  ReplayBuffer rb(cap);
  for (std::size_t i = 0; i < 80; ++i) rb.push(ReplayEntry{});
  Rng rng = make_rng(21);
  std::vector<double> counts(cap, 0.0);
  const std::size_t draws = 100000;
  for (std::size_t k = 0; k < draws / 100; ++k)
    for (auto i : rb.sample_indices(100, rng)) counts.at(i) += 1;
  const double expected = double(draws) / cap;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 49 degrees of freedom; the 99.9% quantile is about 85.4.
  EXPECT_LT(chi2, 85.4);
}

TEST(Ddqn, TargetsHandEvaluated) {
  PolicyNetwork<float> online(NetworkShape::reduced(8, HeadKind::discrete));
  PolicyNetwork<float> target(online.shape());
  // Zero weights leave the Q-values equal to the head biases.
  std::fill(online.parameters().begin(), online.parameters().end(), 0.0f);
  std::fill(target.parameters().begin(), target.parameters().end(), 0.0f);
  const auto& b = online.tensor("policy.bias");
  online.parameters()[b.offset + 3] = 1.0f;  // online argmax: action 3
  for (std::size_t a = 0; a < 10; ++a) target.parameters()[b.offset + a] = 5.0f;
  target.parameters()[b.offset + 3] = 2.0f;  // evaluated by the target net
  ReplayEntry cont, term;
  cont.input.assign(online.shape().input_size(), 0.1f);
  cont.next_input = cont.input;
  cont.reward = 0.0;
  term = cont;
  term.reward = 0.7;
  term.done = true;
  const ReplayEntry* s[] = {&cont, &term};
  const auto y = ddqn_targets(online, target, s, 0.95);
  EXPECT_NEAR(y[0], 1.9, 1e-7);
  EXPECT_EQ(y[1], 0.7);
}

TEST(Ddqn, TargetCopiedOnlyOnSchedule) {
  TrainConfig cfg = TrainConfig::for_algorithm(Algorithm::ddqn);
  cfg.learning_rate = 1e-3;
  DdqnLearner learner(small_net(HeadKind::discrete, 11), cfg);
  Rng rng = make_rng(4);
  std::normal_distribution<float> n01(0.0f, 1.0f);
  std::vector<ReplayEntry> data(16);
  for (auto& e : data) {
    e.input.resize(learner.online().shape().input_size());
    e.next_input.resize(e.input.size());
    for (auto& x : e.input) x = n01(rng);
    for (auto& x : e.next_input) x = n01(rng);
    e.action = static_cast<std::size_t>(rng() % 10);
    e.reward = n01(rng);
  }
  std::vector<const ReplayEntry*> sample;
  for (const auto& e : data) sample.push_back(&e);
  std::vector<float> last(learner.target().parameters().begin(), learner.target().parameters().end());
  for (std::size_t k = 1; k <= 600; ++k) {
    learner.update(sample);
    const auto t = learner.target().parameters();
    const bool changed = !std::equal(t.begin(), t.end(), last.begin());
    EXPECT_EQ(changed, k % 250 == 0) << "update " << k;
    if (k % 250 == 0) {
      EXPECT_TRUE(std::equal(t.begin(), t.end(), learner.online().parameters().begin()));
      last.assign(t.begin(), t.end());
    }
  }
}

TEST(Ddqn, ContinuousHeadRejected) {
  EXPECT_THROW(DdqnLearner(small_net(HeadKind::continuous, 1), TrainConfig::for_algorithm(Algorithm::ddqn)),
               ConfigError);
}

// ---------------------------------------------------------------------------

namespace {

SimConfig short_scan() {
  SimConfig s;
  s.lidar_beams = 61;
  return s;
}

std::vector<WorldSpec> toy_worlds(std::size_t copies = 2) {
  auto m = std::make_shared<const WorldMap>(load_world(resolve_world("open_room")));
  return {{m, 1, copies}};
}

}  // namespace

TEST(TrainLoop, ZeroEpisodesReturnsInitialParams) {
  PolicyNetwork<float> init(network_shape_for(short_scan(), HeadKind::discrete));
  Rng rng = make_rng(3);
  init.initialize(rng);
  StopCriteria stop;
  stop.max_episodes = 0;
  const auto r = train_loop(toy_worlds(), short_scan(), RewardConfig{}, TrainConfig{}, 1, stop, {}, init);
  EXPECT_EQ(r.updates, 0u);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(std::equal(init.parameters().begin(), init.parameters().end(), r.params.parameters().begin()));
}

TEST(TrainLoop, DeterministicAcrossWorkerCounts) {
  StopCriteria stop;
  stop.max_updates = 4;
  TrainConfig cfg;
  cfg.minibatch_size = 64;
  auto run = [&](std::size_t threads, Algorithm a) {
    TrainConfig c = a == Algorithm::ddqn ? TrainConfig::for_algorithm(a) : cfg;
    c.algorithm = a;
    c.threads = threads;
    c.rollout_length = 32;
    return train_loop(toy_worlds(3), short_scan(), RewardConfig{}, c, 9, stop);
  };
  for (Algorithm a : {Algorithm::ppo, Algorithm::a2c, Algorithm::ddqn}) {
    const auto r1 = run(1, a);
    const auto r2 = run(3, a);
    EXPECT_EQ(r1.updates, 4u);
    ASSERT_EQ(r1.log.size(), r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
      EXPECT_EQ(r1.log[i].episode, r2.log[i].episode);
      EXPECT_EQ(r1.log[i].outcome, r2.log[i].outcome);
      EXPECT_EQ(r1.log[i].steps, r2.log[i].steps);
      EXPECT_EQ(r1.log[i].sum_reward, r2.log[i].sum_reward);
    }
    EXPECT_TRUE(std::equal(r1.params.parameters().begin(), r1.params.parameters().end(),
                           r2.params.parameters().begin()));
  }
}

TEST(TrainLoop, ParametersChangeAfterAnUpdate) {
  StopCriteria stop;
  stop.max_updates = 1;
  PolicyNetwork<float> init(network_shape_for(short_scan(), HeadKind::discrete));
  Rng rng = make_rng(3);
  init.initialize(rng);
  TrainConfig cfg;
  cfg.rollout_length = 16;
  std::size_t calls = 0;
  TrainCallbacks cb;
  cb.on_update = [&](std::size_t n, const PolicyNetwork<float>&, const UpdateStats& st) {
    ++calls;
    EXPECT_EQ(n, 1u);
    EXPECT_GT(st.gradient_steps, 0u);
  };
  const auto r = train_loop(toy_worlds(), short_scan(), RewardConfig{}, cfg, 1, stop, cb, init);
  EXPECT_EQ(calls, 1u);
  EXPECT_FALSE(std::equal(init.parameters().begin(), init.parameters().end(), r.params.parameters().begin()));
}

TEST(VecEnvTest, FinishedSlotsResetAndCountWorldEpisodes) {
  SimConfig sim = short_scan();
  sim.max_steps = 5;
  VecEnv env(toy_worlds(2), sim, RewardConfig{}, 4, 1);
  EXPECT_EQ(env.size(), 2u);
  std::vector<EpisodeRecord> all;
  for (int k = 0; k < 12; ++k) {
    std::vector<Action> a(env.active().size(), Action{0.0, 1.5});
    env.step(a);
    for (auto& e : env.take_finished()) all.push_back(e);
  }
  ASSERT_EQ(all.size(), 4u);  // two slots time out twice each
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].episode, i + 1);
    EXPECT_EQ(all[i].outcome, AgentStatus::timed_out);
    EXPECT_EQ(all[i].steps, 5u);
  }
  EXPECT_NE(all[0].world_episode, all[1].world_episode);
}

TEST(SuccessRate, WindowedFraction) {
  std::vector<EpisodeRecord> log(10);
  for (std::size_t i = 0; i < 10; ++i) log[i].outcome = i >= 6 ? AgentStatus::reached_goal : AgentStatus::timed_out;
  EXPECT_DOUBLE_EQ(success_rate(log, 4), 1.0);
  EXPECT_DOUBLE_EQ(success_rate(log, 10), 0.4);
  EXPECT_DOUBLE_EQ(success_rate(log, 100), 0.4);
}
