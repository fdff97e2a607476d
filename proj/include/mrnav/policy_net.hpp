#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mrnav/rng.hpp"
#include "mrnav/sim.hpp"

namespace mrnav {

enum class HeadKind : std::uint8_t { discrete = 0, continuous = 1 };

inline constexpr std::size_t kDiscreteActions = 10;
inline constexpr std::size_t kContinuousActionDim = 2;

// Layer dimensions. Defaults reproduce the published architecture; tests use
// reduced variants.
struct NetworkShape {
  std::size_t beams = 1081;
  std::size_t frames = kStackFrames;
  std::size_t conv1_filters = 16, conv1_kernel = 7, conv1_stride = 3;
  std::size_t conv2_filters = 32, conv2_kernel = 5, conv2_stride = 2;
  std::size_t fc_lidar = 256;
  std::size_t fc_goal_dir = 32;
  std::size_t fc_goal_dist = 16;
  std::size_t fc_velocity = 32;
  std::size_t fc_merge = 384;
  HeadKind head = HeadKind::discrete;

  // Valid-convolution output lengths. Throw ShapeError when a kernel does not fit.
  std::size_t conv1_length() const;
  std::size_t conv2_length() const;
  std::size_t flatten_size() const { return conv2_filters * conv2_length(); }
  std::size_t merge_input() const { return fc_lidar + fc_goal_dir + fc_goal_dist + fc_velocity; }
  std::size_t action_outputs() const;
  // Rows of one encoded observation column.
  std::size_t input_size() const { return frames * (beams + 5); }
  void validate() const;
  bool operator==(const NetworkShape&) const = default;

  // Tiny net with every layer type, for gradient checks.
  static NetworkShape reduced(std::size_t beams, HeadKind head);
};

// Encoded input layout (one column per sample):
//   [0, frames*beams)          lidar, beam-major, frame-minor: x[i*frames + f]
//   next 2*frames              goal direction (x, y) per frame
//   next frames                goal distance per frame
//   next 2*frames              previous velocity (v_lin, v_ang) per frame
// Inputs are scaled to order one.
inline constexpr double kLidarScale = 0.1;
inline constexpr double kDistanceScale = 0.1;

template <typename Scalar>
void encode_observation(const ObservationStack& stack, const NetworkShape& shape, Scalar* out);

template <typename Scalar>
std::vector<Scalar> encode_observation(const ObservationStack& stack, const NetworkShape& shape) {
  std::vector<Scalar> v(shape.input_size());
  encode_observation(stack, shape, v.data());
  return v;
}

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> dims;  // row-major
  std::size_t offset = 0;
  std::size_t size() const;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct NetworkOutput {
  Matrix<Scalar> policy;  // logits (discrete) or raw means (continuous), one column per sample
  Matrix<Scalar> value;   // 1 x batch
  std::array<Scalar, kContinuousActionDim> log_std{};  // continuous head only
};

// Activations retained by forward() for backward().
template <typename Scalar>
struct ForwardCache {
  std::size_t batch = 0;
  Matrix<Scalar> input;
  Matrix<Scalar> cols1, act1, cols2, act2;
  Matrix<Scalar> h_lidar, h_goal_dir, h_goal_dist, h_velocity, concat, h_merge;
  bool valid() const { return batch > 0; }
};

// Upstream gradients of a scalar loss with respect to the network outputs.
template <typename Scalar>
struct OutputGradient {
  Matrix<Scalar> policy;  // same shape as NetworkOutput::policy
  Matrix<Scalar> value;   // 1 x batch
  std::array<Scalar, kContinuousActionDim> log_std{};
};

// Parameter and gradient storage. Eigen's vectorized reductions peel by
// address alignment, so a fixed alignment keeps results bitwise reproducible.
template <typename Scalar>
using AlignedVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

// Shared actor-critic network: two 1D convolutions over the stacked lidar,
// three dense branches for goal direction / distance / velocity, a merge
// layer, then a policy head and a value head. ReLU on all seven hidden layers.
template <typename Scalar>
class PolicyNetwork {
 public:
  explicit PolicyNetwork(NetworkShape shape);

  // He-uniform fan-in init; heads scaled by 0.01; continuous log-std set to
  // log(half the action range).
  void initialize(Rng& rng);

  const NetworkShape& shape() const { return shape_; }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<TensorInfo>& layout() const { return layout_; }
  const TensorInfo& tensor(const std::string& name) const;

  // input: input_size() x batch. Fills `cache` when given.
  NetworkOutput<Scalar> forward(const Matrix<Scalar>& input, ForwardCache<Scalar>* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into `gradient` (length parameter_count()).
  void backward(const ForwardCache<Scalar>& cache, const OutputGradient<Scalar>& upstream,
                std::span<Scalar> gradient) const;

  template <typename Other>
  PolicyNetwork<Other> cast() const {
    PolicyNetwork<Other> out(shape_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  NetworkShape shape_;
  std::vector<TensorInfo> layout_;
  AlignedVector<Scalar> params_;
};

// ---------------------------------------------------------------------------
// Action distributions (double precision, per sample).

struct ActionDistribution {
  HeadKind kind = HeadKind::discrete;
  std::vector<double> logits;                          // discrete
  std::array<double, kContinuousActionDim> mean{};     // continuous, physical units
  std::array<double, kContinuousActionDim> std_dev{};  // continuous

  std::vector<double> log_probs() const;  // discrete, logsumexp-normalized
  double entropy() const;
};

template <typename Scalar>
ActionDistribution distribution_at(const NetworkOutput<Scalar>& out, std::size_t sample, HeadKind kind);

// Affine map from the raw mean output to physical velocity units.
std::array<double, kContinuousActionDim> continuous_mean(std::span<const double> raw);

struct SampledAction {
  std::size_t index = 0;  // discrete
  Action action;          // command sent to the robot (clamped)
  std::array<double, kContinuousActionDim> raw{};  // continuous sample before clamping
  double log_prob = 0.0;
};

SampledAction sample_action(const ActionDistribution& dist, Rng& rng);
// argmax / mean.
SampledAction greedy_action(const ActionDistribution& dist);

double gaussian_log_prob(std::span<const double> x, std::span<const double> mean, std::span<const double> std_dev);

// 2 x 5 grid: index = 5 * (v_lin == 0.6) + angular slot, angular slots
// {-1.5, -0.75, 0, 0.75, 1.5}. Throws ContractError for index >= 10.
Action discretize_action(std::size_t index);

// ---------------------------------------------------------------------------
// Adam with bias correction.

template <typename Scalar>
class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::span<Scalar> params, std::span<const Scalar> gradient, double learning_rate);
  std::size_t steps() const { return t_; }
  std::span<const Scalar> first_moment() const { return m_; }
  std::span<const Scalar> second_moment() const { return v_; }

 private:
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  AlignedVector<Scalar> m_, v_;
};

// Scales `gradient` so its L2 norm is at most max_norm; returns the norm before.
template <typename Scalar>
double clip_gradient_norm(std::span<Scalar> gradient, double max_norm);

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian, versioned, with a shape manifest and a free
// metadata string (the harness stores the config hash there). Layout in README.

void save_checkpoint(const PolicyNetwork<float>& net, const std::filesystem::path& path,
                     std::string_view metadata = {});
std::string serialize_checkpoint(const PolicyNetwork<float>& net, std::string_view metadata = {});
PolicyNetwork<float> load_checkpoint(const std::filesystem::path& path, std::string* metadata = nullptr);
PolicyNetwork<float> parse_checkpoint(const std::string& bytes, std::string* metadata = nullptr);

// Throws ShapeError unless the network consumes observations of this simulator.
void check_compatible(const NetworkShape& shape, const SimConfig& sim);

}  // namespace mrnav
