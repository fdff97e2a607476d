#include "mrnav/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrnav/error.hpp"
#include "parallel.hpp"

namespace mrnav {

namespace {

// Samples per forward/backward pass; minibatches are accumulated chunk-wise.
constexpr std::size_t kChunk = 256;

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ppo: return "ppo";
    case Algorithm::a2c: return "a2c";
    case Algorithm::ddqn: return "ddqn";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "ppo") return Algorithm::ppo;
  if (name == "a2c") return Algorithm::a2c;
  if (name == "ddqn") return Algorithm::ddqn;
  throw ConfigError("unknown algorithm '" + std::string(name) + "' (expected ppo, a2c or ddqn)");
}

TrainConfig TrainConfig::for_algorithm(Algorithm a) {
  TrainConfig c;
  c.algorithm = a;
  if (a == Algorithm::ddqn) {
    c.learning_rate = 5e-5;
    c.gamma = 0.95;
    c.batch_size = 64;
    c.target_update_interval = 250;
    c.max_grad_norm = 10.0;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must be in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (rollout_length < 1) throw ConfigError("rollout_length must be at least 1");
  if (env_copies < 1) throw ConfigError("env_copies must be at least 1");
  if (algorithm == Algorithm::ppo) {
    if (!(clip_epsilon > 0.0)) throw ConfigError("clip_epsilon must be positive");
    if (minibatch_size < 1 || epochs < 1) throw ConfigError("PPO needs minibatch_size and epochs >= 1");
  }
  if (algorithm == Algorithm::ddqn) {
    if (action_space != HeadKind::discrete) throw ConfigError("DDQN supports only the discrete action space");
    if (batch_size < 1 || replay_capacity < batch_size)
      throw ConfigError("DDQN needs replay_capacity >= batch_size >= 1");
    if (target_update_interval < 1) throw ConfigError("target_update_interval must be at least 1");
  }
}

// ---------------------------------------------------------------------------

Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractError("compute_gae: length mismatch");
  Advantages out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

RolloutBatch make_batch(std::span<const Trajectory> trajectories, const TrainConfig& config, std::size_t input_size) {
  std::size_t total = 0;
  for (const auto& t : trajectories) total += t.steps.size();
  RolloutBatch b;
  b.inputs.resize(static_cast<Eigen::Index>(input_size), static_cast<Eigen::Index>(total));
  b.actions.reserve(total);
  std::size_t col = 0;
  for (const auto& t : trajectories) {
    const std::size_t n = t.steps.size();
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = t.steps[k];
      if (s.input.size() != input_size) throw ShapeError("transition input has the wrong size");
      b.inputs.col(static_cast<Eigen::Index>(col++)) =
          Eigen::Map<const Eigen::VectorXf>(s.input.data(), static_cast<Eigen::Index>(input_size));
      b.actions.push_back(s.action_index);
      b.raw_actions.push_back(s.raw_action);
      b.old_log_probs.push_back(s.log_prob);
      b.old_values.push_back(s.value);
      r[k] = s.reward;
      v[k] = s.value;
      d[k] = s.done ? 1 : 0;
    }
    auto gae = compute_gae(r, v, d, t.bootstrap_value, config.gamma, config.gae_lambda);
    b.advantages.insert(b.advantages.end(), gae.advantages.begin(), gae.advantages.end());
    b.returns.insert(b.returns.end(), gae.returns.begin(), gae.returns.end());
  }
  if (config.normalize_advantages && total > 1) {
    const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / static_cast<double>(total);
    double var = 0.0;
    for (double a : b.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(total));
    for (double& a : b.advantages) a = (a - mean) / (sd + 1e-8);
  }
  return b;
}

LossStats policy_loss(const PolicyNetwork<float>& net, const RolloutBatch& batch, std::span<const std::size_t> indices,
                      const TrainConfig& config, PolicyObjective objective, std::span<float> gradient) {
  const std::size_t n = indices.size();
  if (n == 0) throw ContractError("policy loss over an empty batch");
  const auto& shape = net.shape();
  const bool discrete = shape.head == HeadKind::discrete;
  const std::size_t A = shape.action_outputs();
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool want_grad = !gradient.empty();
  const double eps = config.clip_epsilon;

  LossStats st;
  st.samples = n;
  ForwardCache<float> cache;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    Matrix<float> inputs(batch.inputs.rows(), static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k)
      inputs.col(static_cast<Eigen::Index>(k)) = batch.inputs.col(static_cast<Eigen::Index>(indices[start + k]));
    const auto out = net.forward(inputs, want_grad ? &cache : nullptr);

    OutputGradient<float> up;
    up.policy = Matrix<float>::Zero(static_cast<Eigen::Index>(A), static_cast<Eigen::Index>(m));
    up.value = Matrix<float>::Zero(1, static_cast<Eigen::Index>(m));
    std::array<double, kContinuousActionDim> d_log_std{};

    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = indices[start + k];
      const auto col = static_cast<Eigen::Index>(k);
      const double adv = batch.advantages[i];
      const auto dist = distribution_at(out, k, shape.head);

      double logp = 0.0;
      double entropy = 0.0;
      std::vector<double> dlogp_dout(A, 0.0), dent_dout(A, 0.0);
      std::array<double, kContinuousActionDim> dlogp_dls{}, dent_dls{};
      if (discrete) {
        const auto lp = dist.log_probs();
        for (std::size_t j = 0; j < A; ++j) entropy -= std::exp(lp[j]) * lp[j];
        logp = lp[batch.actions[i]];
        for (std::size_t j = 0; j < A; ++j) {
          const double p = std::exp(lp[j]);
          dlogp_dout[j] = (j == batch.actions[i] ? 1.0 : 0.0) - p;
          dent_dout[j] = -p * (lp[j] + entropy);
        }
      } else {
        const auto& x = batch.raw_actions[i];
        logp = gaussian_log_prob(x, dist.mean, dist.std_dev);
        entropy = dist.entropy();
        const std::array<double, kContinuousActionDim> half{0.5 * (kMaxLinear - kMinLinear), kMaxAngular};
        for (std::size_t d = 0; d < kContinuousActionDim; ++d) {
          const double z = (x[d] - dist.mean[d]) / dist.std_dev[d];
          dlogp_dout[d] = z / dist.std_dev[d] * half[d];
          dlogp_dls[d] = z * z - 1.0;
          dent_dls[d] = 1.0;
        }
      }

      const double ratio = std::exp(logp - batch.old_log_probs[i]);
      double surrogate = 0.0;
      double dsurr_dlogp = 0.0;
      if (objective == PolicyObjective::clipped_surrogate) {
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
        if (unclipped <= clipped) {
          surrogate = unclipped;
          dsurr_dlogp = ratio * adv;
        } else {
          surrogate = clipped;
          st.clip_fraction += 1.0;
        }
      } else {
        surrogate = logp * adv;
        dsurr_dlogp = adv;
      }
      const double value = static_cast<double>(out.value(0, col));
      const double verr = value - batch.returns[i];

      st.policy_loss -= surrogate;
      st.value_loss += 0.5 * verr * verr;
      st.entropy += entropy;
      st.approx_kl += (ratio - 1.0) - (logp - batch.old_log_probs[i]);
      st.mean_ratio += ratio;

      if (want_grad) {
        const double g_logp = -dsurr_dlogp * inv_n;
        const double g_ent = -config.entropy_coef * inv_n;
        for (std::size_t j = 0; j < A; ++j)
          up.policy(static_cast<Eigen::Index>(j), col) = static_cast<float>(g_logp * dlogp_dout[j] + g_ent * dent_dout[j]);
        up.value(0, col) = static_cast<float>(config.value_coef * verr * inv_n);
        if (!discrete)
          for (std::size_t d = 0; d < kContinuousActionDim; ++d) d_log_std[d] += g_logp * dlogp_dls[d] + g_ent * dent_dls[d];
      }
    }
    if (want_grad) {
      for (std::size_t d = 0; d < kContinuousActionDim; ++d) up.log_std[d] = static_cast<float>(d_log_std[d]);
      net.backward(cache, up, gradient);
    }
  }
  st.policy_loss *= inv_n;
  st.value_loss *= inv_n;
  st.entropy *= inv_n;
  st.approx_kl *= inv_n;
  st.clip_fraction *= inv_n;
  st.mean_ratio *= inv_n;
  st.total = st.policy_loss + config.value_coef * st.value_loss - config.entropy_coef * st.entropy;
  return st;
}

namespace {

void accumulate(LossStats& acc, const LossStats& s) {
  acc.policy_loss += s.policy_loss;
  acc.value_loss += s.value_loss;
  acc.entropy += s.entropy;
  acc.approx_kl += s.approx_kl;
  acc.clip_fraction += s.clip_fraction;
  acc.mean_ratio += s.mean_ratio;
  acc.total += s.total;
  acc.samples += s.samples;
}

void average(LossStats& acc, std::size_t count) {
  if (count == 0) return;
  const double inv = 1.0 / static_cast<double>(count);
  acc.policy_loss *= inv;
  acc.value_loss *= inv;
  acc.entropy *= inv;
  acc.approx_kl *= inv;
  acc.clip_fraction *= inv;
  acc.mean_ratio *= inv;
  acc.total *= inv;
}

}  // namespace

UpdateStats ppo_update(OnPolicyLearner& learner, const RolloutBatch& batch, const TrainConfig& config, Rng& rng) {
  if (batch.size() == 0) throw ContractError("ppo_update on an empty batch");
  UpdateStats us;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  AlignedVector<float> grad(learner.net.parameter_count());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
      const std::size_t m = std::min(config.minibatch_size, order.size() - start);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const auto st = policy_loss(learner.net, batch, std::span(order).subspan(start, m), config,
                                  PolicyObjective::clipped_surrogate, grad);
      accumulate(us.loss, st);
      us.grad_norm = clip_gradient_norm<float>(grad, config.max_grad_norm);
      learner.adam.step(learner.net.parameters(), grad, config.learning_rate);
      ++us.gradient_steps;
    }
  }
  average(us.loss, us.gradient_steps);
  return us;
}

UpdateStats a2c_update(OnPolicyLearner& learner, const RolloutBatch& batch, const TrainConfig& config) {
  if (batch.size() == 0) throw ContractError("a2c_update on an empty batch");
  UpdateStats us;
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), 0);
  AlignedVector<float> grad(learner.net.parameter_count(), 0.0f);
  us.loss = policy_loss(learner.net, batch, all, config, PolicyObjective::vanilla, grad);
  us.grad_norm = clip_gradient_norm<float>(grad, config.max_grad_norm);
  learner.adam.step(learner.net.parameters(), grad, config.learning_rate);
  us.gradient_steps = 1;
  return us;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(ReplayEntry e) {
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(e));
  } else {
    entries_[next_] = std::move(e);
  }
  next_ = (next_ + 1) % capacity_;
  ++pushes_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (entries_.empty()) throw ContractError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<const ReplayEntry*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<const ReplayEntry*> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) out.push_back(&entries_[i]);
  return out;
}

namespace {

Matrix<float> stack_inputs(std::span<const ReplayEntry* const> sample, bool next) {
  const auto rows = static_cast<Eigen::Index>(sample.front()->input.size());
  Matrix<float> m(rows, static_cast<Eigen::Index>(sample.size()));
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const auto& v = next ? sample[k]->next_input : sample[k]->input;
    m.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXf>(v.data(), rows);
  }
  return m;
}

}  // namespace

std::vector<double> ddqn_targets(const PolicyNetwork<float>& online, const PolicyNetwork<float>& target,
                                 std::span<const ReplayEntry* const> sample, double gamma) {
  std::vector<double> y(sample.size());
  if (sample.empty()) return y;
  const Matrix<float> next = stack_inputs(sample, true);
  const auto q_online = online.forward(next);
  const auto q_target = target.forward(next);
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    Eigen::Index best = 0;
    q_online.policy.col(col).maxCoeff(&best);
    const double bootstrap = sample[k]->done ? 0.0 : gamma * static_cast<double>(q_target.policy(best, col));
    y[k] = sample[k]->reward + bootstrap;
  }
  return y;
}

DdqnLearner::DdqnLearner(PolicyNetwork<float> online, const TrainConfig& config)
    : config_(config), online_(std::move(online)), target_(online_), adam_(online_.parameter_count()) {
  if (online_.shape().head != HeadKind::discrete) throw ConfigError("DDQN needs a discrete action head");
}

double DdqnLearner::update(std::span<const ReplayEntry* const> sample) {
  if (sample.empty()) throw ContractError("DDQN update on an empty sample");
  const auto y = ddqn_targets(online_, target_, sample, config_.gamma);
  const double inv_n = 1.0 / static_cast<double>(sample.size());
  AlignedVector<float> grad(online_.parameter_count(), 0.0f);
  double loss = 0.0;
  ForwardCache<float> cache;
  for (std::size_t start = 0; start < sample.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, sample.size() - start);
    const auto part = sample.subspan(start, m);
    const auto out = online_.forward(stack_inputs(part, false), &cache);
    OutputGradient<float> up;
    up.policy = Matrix<float>::Zero(out.policy.rows(), out.policy.cols());
    up.value = Matrix<float>::Zero(1, out.policy.cols());
    for (std::size_t k = 0; k < m; ++k) {
      const auto a = static_cast<Eigen::Index>(part[k]->action);
      const double diff = static_cast<double>(out.policy(a, static_cast<Eigen::Index>(k))) - y[start + k];
      loss += 0.5 * diff * diff * inv_n;
      up.policy(a, static_cast<Eigen::Index>(k)) = static_cast<float>(diff * inv_n);
    }
    online_.backward(cache, up, grad);
  }
  clip_gradient_norm<float>(grad, config_.max_grad_norm);
  adam_.step(online_.parameters(), grad, config_.learning_rate);
  ++updates_;
  if (updates_ % config_.target_update_interval == 0) target_ = online_;
  return loss;
}

// ---------------------------------------------------------------------------

VecEnv::VecEnv(std::vector<WorldSpec> worlds, SimConfig sim, RewardConfig reward, std::uint64_t seed,
               std::size_t threads)
    : sim_(sim), threads_(detail::resolve_threads(threads)) {
  if (worlds.empty()) throw ConfigError("need at least one world");
  std::size_t idx = 0;
  for (const auto& w : worlds) {
    if (!w.map) throw ConfigError("world spec without a map");
    if (w.agents < 1) throw ConfigError("world '" + w.map->name + "' needs at least one agent");
    for (std::size_t c = 0; c < w.copies; ++c, ++idx) {
      Slot s;
      s.world = w.map;
      s.agents = w.agents;
      s.episode = std::make_unique<Episode>(w.map, sim, reward, derive_seed(seed, 2 * idx));
      s.policy_rng = Rng(derive_seed(seed, 2 * idx + 1));
      reset_slot(s);
      envs_.push_back(std::move(s));
    }
  }
  if (envs_.empty()) throw ConfigError("no environment instances (copies = 0)");
  refresh_active();
}

void VecEnv::reset_slot(Slot& s) {
  s.episode->reset_random(s.agents);
  s.returns.assign(s.agents, 0.0);
  s.steps.assign(s.agents, 0);
  s.world_episode = ++world_episode_counter_;
}

void VecEnv::refresh_active() {
  active_.clear();
  for (std::size_t e = 0; e < envs_.size(); ++e)
    for (std::size_t a : envs_[e].episode->active_agents()) active_.push_back({e, a});
}

void VecEnv::encode(const NetworkShape& shape, Matrix<float>& inputs) const {
  inputs.resize(static_cast<Eigen::Index>(shape.input_size()), static_cast<Eigen::Index>(active_.size()));
  for (std::size_t k = 0; k < active_.size(); ++k) {
    const auto& ref = active_[k];
    encode_observation<float>(envs_[ref.env].episode->observation(ref.agent), shape,
                              inputs.col(static_cast<Eigen::Index>(k)).data());
  }
}

std::vector<AgentStep> VecEnv::step(std::span<const Action> actions) {
  if (actions.size() != active_.size()) throw ContractError("one action per active agent required");
  std::vector<std::vector<AgentCommand>> commands(envs_.size());
  for (std::size_t k = 0; k < active_.size(); ++k) commands[active_[k].env].push_back({active_[k].agent, actions[k]});

  std::vector<std::vector<StepOutcome>> outcomes(envs_.size());
  detail::parallel_for(envs_.size(), threads_, [&](std::size_t e) {
    if (!commands[e].empty()) outcomes[e] = envs_[e].episode->step(commands[e]);
  });

  std::vector<AgentStep> steps;
  steps.reserve(active_.size());
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    auto& slot = envs_[e];
    for (auto& o : outcomes[e]) {
      slot.returns[o.agent] += o.reward;
      slot.steps[o.agent] += 1;
      const AgentStatus status = slot.episode->agents()[o.agent].status;
      if (o.done) {
        finished_.push_back({++episode_counter_, slot.world_episode, slot.world->name, status, slot.steps[o.agent],
                             slot.returns[o.agent]});
      }
      steps.push_back({{e, o.agent}, o.reward, o.done, status, std::move(o.next)});
    }
  }
  for (auto& slot : envs_)
    if (slot.episode->done()) reset_slot(slot);
  refresh_active();
  return steps;
}

std::vector<EpisodeRecord> VecEnv::take_finished() { return std::exchange(finished_, {}); }

// ---------------------------------------------------------------------------

double success_rate(std::span<const EpisodeRecord> log, std::size_t window) {
  if (log.empty() || window == 0) return 0.0;
  const std::size_t n = std::min(window, log.size());
  std::size_t ok = 0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) ok += log[i].outcome == AgentStatus::reached_goal;
  return static_cast<double>(ok) / static_cast<double>(n);
}

NetworkShape network_shape_for(const SimConfig& sim, HeadKind head) {
  NetworkShape s;
  s.beams = sim.lidar_beams;
  s.head = head;
  s.validate();
  return s;
}

namespace {

class StopTracker {
 public:
  explicit StopTracker(const StopCriteria& stop) : stop_(stop) {}

  // Records an episode; tracks the first time the full window reaches the threshold.
  void observe(const std::vector<EpisodeRecord>& log) {
    const std::size_t w = stop_.success_window;
    if (!stop_.success_threshold || reached_ || w == 0) return;
    const std::size_t n = log.size();
    ok_in_window_ += log.back().outcome == AgentStatus::reached_goal;
    if (n > w) ok_in_window_ -= log[n - 1 - w].outcome == AgentStatus::reached_goal;
    if (n >= w && static_cast<double>(ok_in_window_) >= *stop_.success_threshold * static_cast<double>(w)) {
      reached_ = true;
      at_episode_ = n;
    }
  }

  bool done(std::size_t episodes, std::size_t updates) const {
    if (reached_) return true;
    if (stop_.max_episodes && episodes >= *stop_.max_episodes) return true;
    if (stop_.max_updates && updates >= *stop_.max_updates) return true;
    return false;
  }
  bool reached() const { return reached_; }
  std::size_t at_episode() const { return at_episode_; }

 private:
  StopCriteria stop_;
  std::size_t ok_in_window_ = 0;
  bool reached_ = false;
  std::size_t at_episode_ = 0;
};

void drain(VecEnv& env, TrainResult& result, StopTracker& tracker, const TrainCallbacks& callbacks) {
  for (auto& rec : env.take_finished()) {
    result.log.push_back(std::move(rec));
    tracker.observe(result.log);
    if (callbacks.on_episode) callbacks.on_episode(result.log.back());
  }
}

TrainResult train_on_policy(const std::vector<WorldSpec>& worlds, const SimConfig& sim, const RewardConfig& reward,
                            const TrainConfig& config, std::uint64_t seed, const StopCriteria& stop,
                            const TrainCallbacks& callbacks, PolicyNetwork<float> initial) {
  const NetworkShape shape = initial.shape();
  OnPolicyLearner learner(std::move(initial));
  TrainResult result{learner.net, {}, 0, false, 0, {}};
  StopTracker tracker(stop);
  if (tracker.done(0, 0)) return result;

  std::vector<WorldSpec> specs = worlds;
  for (auto& w : specs) w.copies = w.copies ? w.copies : config.env_copies;
  VecEnv env(specs, sim, reward, derive_seed(seed, 1), config.threads);
  Rng update_rng = make_rng(seed, 2);

  std::vector<std::vector<Trajectory>> open(env.size());
  for (std::size_t e = 0; e < env.size(); ++e) open[e].resize(env.episode(e).agents().size());
  Matrix<float> inputs;

  while (!tracker.done(result.log.size(), result.updates)) {
    std::vector<Trajectory> finished;
    for (std::size_t t = 0; t < config.rollout_length; ++t) {
      env.encode(shape, inputs);
      const auto out = learner.net.forward(inputs);
      const auto refs = env.active();
      std::vector<Action> actions(refs.size());
      std::vector<SampledAction> samples(refs.size());
      for (std::size_t k = 0; k < refs.size(); ++k) {
        samples[k] = sample_action(distribution_at(out, k, shape.head), env.policy_rng(refs[k].env));
        actions[k] = samples[k].action;
      }
      auto steps = env.step(actions);
      for (std::size_t k = 0; k < refs.size(); ++k) {
        auto& traj = open[refs[k].env][refs[k].agent];
        Transition tr;
        const float* col = inputs.col(static_cast<Eigen::Index>(k)).data();
        tr.input.assign(col, col + inputs.rows());
        tr.action_index = samples[k].index;
        tr.raw_action = samples[k].raw;
        tr.log_prob = samples[k].log_prob;
        tr.value = static_cast<double>(out.value(0, static_cast<Eigen::Index>(k)));
        tr.reward = steps[k].reward;
        tr.done = steps[k].done;
        traj.steps.push_back(std::move(tr));
        if (steps[k].done) finished.push_back(std::exchange(traj, {}));
      }
      // Newly reset instances may have a different agent count.
      for (std::size_t e = 0; e < env.size(); ++e)
        if (open[e].size() != env.episode(e).agents().size()) open[e].resize(env.episode(e).agents().size());
      drain(env, result, tracker, callbacks);
    }
    // Bootstrap the segments cut at T_max.
    env.encode(shape, inputs);
    if (inputs.cols() > 0) {
      const auto out = learner.net.forward(inputs);
      const auto& refs = env.active();
      for (std::size_t k = 0; k < refs.size(); ++k) {
        auto& traj = open[refs[k].env][refs[k].agent];
        if (traj.steps.empty()) continue;
        traj.bootstrap_value = static_cast<double>(out.value(0, static_cast<Eigen::Index>(k)));
        finished.push_back(std::exchange(traj, {}));
      }
    }
    const RolloutBatch batch = make_batch(finished, config, shape.input_size());
    if (batch.size() == 0) continue;
    UpdateStats us = config.algorithm == Algorithm::ppo ? ppo_update(learner, batch, config, update_rng)
                                                        : a2c_update(learner, batch, config);
    ++result.updates;
    if (callbacks.on_update) callbacks.on_update(result.updates, learner.net, us);
    result.update_stats.push_back(us);
    if (callbacks.should_stop && callbacks.should_stop()) break;
  }
  result.params = learner.net;
  result.threshold_reached = tracker.reached();
  result.episodes_at_threshold = tracker.at_episode();
  return result;
}

TrainResult train_ddqn(const std::vector<WorldSpec>& worlds, const SimConfig& sim, const RewardConfig& reward,
                       const TrainConfig& config, std::uint64_t seed, const StopCriteria& stop,
                       const TrainCallbacks& callbacks, PolicyNetwork<float> initial) {
  const NetworkShape shape = initial.shape();
  DdqnLearner learner(std::move(initial), config);
  TrainResult result{learner.online(), {}, 0, false, 0, {}};
  StopTracker tracker(stop);
  if (tracker.done(0, 0)) return result;

  std::vector<WorldSpec> specs = worlds;
  for (auto& w : specs) w.copies = w.copies ? w.copies : config.env_copies;
  VecEnv env(specs, sim, reward, derive_seed(seed, 1), config.threads);
  Rng update_rng = make_rng(seed, 2);
  ReplayBuffer buffer(config.replay_capacity);
  const double decay_episodes =
      std::max(1.0, config.epsilon_decay_fraction * static_cast<double>(stop.max_episodes.value_or(25000)));

  Matrix<float> inputs;
  while (!tracker.done(result.log.size(), result.updates)) {
    env.encode(shape, inputs);
    const auto q = learner.online().forward(inputs);
    const auto refs = env.active();
    const double progress = std::min(1.0, static_cast<double>(result.log.size()) / decay_episodes);
    const double epsilon = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * progress;
    std::vector<Action> actions(refs.size());
    std::vector<std::size_t> chosen(refs.size());
    for (std::size_t k = 0; k < refs.size(); ++k) {
      Rng& rng = env.policy_rng(refs[k].env);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) < epsilon) {
        chosen[k] = std::uniform_int_distribution<std::size_t>(0, kDiscreteActions - 1)(rng);
      } else {
        Eigen::Index best = 0;
        q.policy.col(static_cast<Eigen::Index>(k)).maxCoeff(&best);
        chosen[k] = static_cast<std::size_t>(best);
      }
      actions[k] = discretize_action(chosen[k]);
    }
    auto steps = env.step(actions);
    for (std::size_t k = 0; k < refs.size(); ++k) {
      ReplayEntry e;
      const float* col = inputs.col(static_cast<Eigen::Index>(k)).data();
      e.input.assign(col, col + inputs.rows());
      e.action = chosen[k];
      e.reward = steps[k].reward;
      e.next_input = encode_observation<float>(steps[k].next, shape);
      e.done = steps[k].done;
      buffer.push(std::move(e));
    }
    drain(env, result, tracker, callbacks);
    if (buffer.size() >= config.batch_size) {
      const auto sample = buffer.sample(config.batch_size, update_rng);
      UpdateStats us;
      us.loss.total = learner.update(sample);
      us.loss.value_loss = us.loss.total;
      us.gradient_steps = 1;
      ++result.updates;
      if (callbacks.on_update) callbacks.on_update(result.updates, learner.online(), us);
      result.update_stats.push_back(us);
      if (callbacks.should_stop && callbacks.should_stop()) break;
    }
  }
  result.params = learner.online();
  result.threshold_reached = tracker.reached();
  result.episodes_at_threshold = tracker.at_episode();
  return result;
}

}  // namespace

TrainResult train_loop(const std::vector<WorldSpec>& worlds, const SimConfig& sim, const RewardConfig& reward,
                       const TrainConfig& config, std::uint64_t seed, const StopCriteria& stop,
                       const TrainCallbacks& callbacks, std::optional<PolicyNetwork<float>> initial) {
  config.validate();
  sim.validate();
  reward.validate();
  if (worlds.empty()) throw ConfigError("train_loop needs at least one world");
  const HeadKind head = config.algorithm == Algorithm::ddqn ? HeadKind::discrete : config.action_space;
  PolicyNetwork<float> net = [&] {
    if (initial) {
      check_compatible(initial->shape(), sim);
      if (initial->shape().head != head) throw ShapeError("initial network has the wrong action head");
      return std::move(*initial);
    }
    PolicyNetwork<float> n(network_shape_for(sim, head));
    Rng init_rng = make_rng(seed, 3);
    n.initialize(init_rng);
    return n;
  }();
  if (config.algorithm == Algorithm::ddqn)
    return train_ddqn(worlds, sim, reward, config, seed, stop, callbacks, std::move(net));
  return train_on_policy(worlds, sim, reward, config, seed, stop, callbacks, std::move(net));
}

}  // namespace mrnav
