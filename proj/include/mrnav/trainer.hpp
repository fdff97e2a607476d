#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrnav/policy_net.hpp"
#include "mrnav/sim.hpp"
#include "mrnav/world.hpp"

namespace mrnav {

enum class Algorithm : std::uint8_t { ppo, a2c, ddqn };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

// Learning hyperparameters. `for_algorithm` returns the published values for
// PPO/A2C (lr 3e-4, gamma 0.99, lambda 0.95, clip 0.2, minibatch 4096,
// T_max 64) and DDQN (lr 5e-5, gamma 0.95, batch 64, target update 250).
// Epochs, entropy/value coefficients, gradient clipping, replay capacity and
// the exploration schedule are not published.
struct TrainConfig {
  Algorithm algorithm = Algorithm::ppo;
  HeadKind action_space = HeadKind::discrete;
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  std::size_t minibatch_size = 4096;
  std::size_t rollout_length = 64;
  std::size_t epochs = 4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;

  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 64;
  std::size_t target_update_interval = 250;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.1;  // of the episode cap

  std::size_t env_copies = 8;  // parallel instances per world
  std::size_t threads = 0;     // 0: hardware concurrency

  static TrainConfig for_algorithm(Algorithm a);
  void validate() const;
};

// ---------------------------------------------------------------------------
// Trajectories and advantage estimation

struct Transition {
  std::vector<float> input;  // encoded observation stack
  std::size_t action_index = 0;
  std::array<double, kContinuousActionDim> raw_action{};
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

// One agent's contiguous steps within a rollout. Ends at a terminal step or at
// the T_max cut, where `bootstrap_value` holds V(s_T) (0 after a terminal).
struct Trajectory {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, returns = A + V.
Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda);

// Flattened training batch.
struct RolloutBatch {
  Matrix<float> inputs;  // input_size x N
  std::vector<std::size_t> actions;
  std::vector<std::array<double, kContinuousActionDim>> raw_actions;
  std::vector<double> old_log_probs;
  std::vector<double> old_values;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::size_t size() const { return actions.size(); }
};

RolloutBatch make_batch(std::span<const Trajectory> trajectories, const TrainConfig& config, std::size_t input_size);

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double total = 0.0;
  std::size_t samples = 0;
};

enum class PolicyObjective : std::uint8_t { clipped_surrogate, vanilla };

// Loss over batch[indices] (mean over the indices). Accumulates the gradient
// of the loss into `gradient`; pass an empty span to evaluate only.
LossStats policy_loss(const PolicyNetwork<float>& net, const RolloutBatch& batch, std::span<const std::size_t> indices,
                      const TrainConfig& config, PolicyObjective objective, std::span<float> gradient);

struct UpdateStats {
  LossStats loss;
  double grad_norm = 0.0;
  std::size_t gradient_steps = 0;
};

// Optimizer state carried across updates.
struct OnPolicyLearner {
  PolicyNetwork<float> net;
  Adam<float> adam;
  explicit OnPolicyLearner(PolicyNetwork<float> n) : net(std::move(n)), adam(net.parameter_count()) {}
};

// Epochs of shuffled minibatches on the clipped surrogate.
UpdateStats ppo_update(OnPolicyLearner& learner, const RolloutBatch& batch, const TrainConfig& config, Rng& rng);
// One gradient step on the whole batch.
UpdateStats a2c_update(OnPolicyLearner& learner, const RolloutBatch& batch, const TrainConfig& config);

// ---------------------------------------------------------------------------
// DDQN

struct ReplayEntry {
  std::vector<float> input;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<float> next_input;
  bool done = false;
};

// FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(ReplayEntry e);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayEntry& at(std::size_t i) const { return entries_.at(i); }
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<const ReplayEntry*> sample(std::size_t n, Rng& rng) const;
  // Total pushes so far; the oldest retained entry is pushes() - size().
  std::size_t pushes() const { return pushes_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::size_t pushes_ = 0;
  std::vector<ReplayEntry> entries_;
};

// y = r + gamma (1 - done) Q_target(s', argmax_a Q_online(s', a)).
std::vector<double> ddqn_targets(const PolicyNetwork<float>& online, const PolicyNetwork<float>& target,
                                 std::span<const ReplayEntry* const> sample, double gamma);

class DdqnLearner {
 public:
  DdqnLearner(PolicyNetwork<float> online, const TrainConfig& config);
  // One gradient step on the squared TD error of the taken actions; copies
  // online -> target after every target_update_interval-th step. Returns the loss.
  double update(std::span<const ReplayEntry* const> sample);
  const PolicyNetwork<float>& online() const { return online_; }
  const PolicyNetwork<float>& target() const { return target_; }
  std::size_t updates() const { return updates_; }

 private:
  TrainConfig config_;
  PolicyNetwork<float> online_;
  PolicyNetwork<float> target_;
  Adam<float> adam_;
  std::size_t updates_ = 0;
};

// ---------------------------------------------------------------------------
// Vectorized environments

struct WorldSpec {
  std::shared_ptr<const WorldMap> map;
  std::size_t agents = 1;
  std::size_t copies = 1;
};

struct EpisodeRecord {
  std::size_t episode = 0;  // agent-episode counter, 1-based
  std::size_t world_episode = 0;  // which instance reset the agent belonged to, 1-based
  std::string world;
  AgentStatus outcome = AgentStatus::active;
  std::size_t steps = 0;
  double sum_reward = 0.0;
};

struct AgentRef {
  std::size_t env = 0;
  std::size_t agent = 0;
  bool operator==(const AgentRef&) const = default;
};

struct AgentStep {
  AgentRef ref;
  double reward = 0.0;
  bool done = false;
  AgentStatus status = AgentStatus::active;
  ObservationStack next;
};

// Independent episodes stepped together. Every instance owns a simulator
// stream and a policy stream derived from the seed, so results do not depend
// on the worker count. Finished instances reset themselves.
class VecEnv {
 public:
  VecEnv(std::vector<WorldSpec> worlds, SimConfig sim, RewardConfig reward, std::uint64_t seed, std::size_t threads = 0);

  std::size_t size() const { return envs_.size(); }
  // Active agents in canonical (env, agent) order.
  const std::vector<AgentRef>& active() const { return active_; }
  void encode(const NetworkShape& shape, Matrix<float>& inputs) const;
  // One action per entry of active(), same order. Returns one AgentStep per entry.
  std::vector<AgentStep> step(std::span<const Action> actions);
  Rng& policy_rng(std::size_t env) { return envs_.at(env).policy_rng; }
  const Episode& episode(std::size_t env) const { return *envs_.at(env).episode; }
  const std::string& world_name(std::size_t env) const { return envs_.at(env).world->name; }

  // Agent-episodes finished since the last call.
  std::vector<EpisodeRecord> take_finished();
  std::size_t episodes_finished() const { return episode_counter_; }

 private:
  struct Slot {
    std::shared_ptr<const WorldMap> world;
    std::size_t agents = 1;
    std::unique_ptr<Episode> episode;
    Rng policy_rng;
    std::vector<double> returns;
    std::vector<std::size_t> steps;
    std::size_t world_episode = 0;
  };
  void reset_slot(Slot& s);
  void refresh_active();

  SimConfig sim_;
  std::vector<Slot> envs_;
  std::vector<AgentRef> active_;
  std::vector<EpisodeRecord> finished_;
  std::size_t episode_counter_ = 0;
  std::size_t world_episode_counter_ = 0;
  std::size_t threads_ = 1;
};

// ---------------------------------------------------------------------------
// Training loop

struct StopCriteria {
  std::optional<std::size_t> max_episodes;  // agent-episodes
  std::optional<std::size_t> max_updates;
  std::optional<double> success_threshold;
  std::size_t success_window = 1000;
};

struct TrainResult {
  PolicyNetwork<float> params;
  std::vector<EpisodeRecord> log;
  std::size_t updates = 0;
  bool threshold_reached = false;
  std::size_t episodes_at_threshold = 0;
  std::vector<UpdateStats> update_stats;
};

struct TrainCallbacks {
  // Called after every update with the update index (1-based) and current parameters.
  std::function<void(std::size_t, const PolicyNetwork<float>&, const UpdateStats&)> on_update;
  std::function<void(const EpisodeRecord&)> on_episode;
  // Checked after every update; true ends training.
  std::function<bool()> should_stop;
};

// Success rate over the last `window` records (fewer if the log is shorter).
double success_rate(std::span<const EpisodeRecord> log, std::size_t window);

TrainResult train_loop(const std::vector<WorldSpec>& worlds, const SimConfig& sim, const RewardConfig& reward,
                       const TrainConfig& config, std::uint64_t seed, const StopCriteria& stop,
                       const TrainCallbacks& callbacks = {}, std::optional<PolicyNetwork<float>> initial = std::nullopt);

// Network shape for this simulator and action space.
NetworkShape network_shape_for(const SimConfig& sim, HeadKind head);

}  // namespace mrnav
