#include "mrnav/policy_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mrnav/error.hpp"

namespace mrnav {

namespace {

template <typename S>
using RowMajor = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstWeights = Eigen::Map<const RowMajor<S>>;
template <typename S>
using Weights = Eigen::Map<RowMajor<S>>;
template <typename S>
using ConstVec = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using Vec = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;

constexpr std::array<double, kContinuousActionDim> kActionCenter{0.5 * (kMinLinear + kMaxLinear), 0.0};
constexpr std::array<double, kContinuousActionDim> kActionHalfRange{0.5 * (kMaxLinear - kMinLinear),
                                                                   kMaxAngular};

std::size_t conv_length(std::size_t in, std::size_t kernel, std::size_t stride, const char* layer) {
  if (kernel == 0 || stride == 0) throw ShapeError(std::string(layer) + ": kernel and stride must be positive");
  if (in < kernel)
    throw ShapeError(std::string(layer) + ": input length " + std::to_string(in) + " shorter than kernel " +
                     std::to_string(kernel));
  return (in - kernel) / stride + 1;
}

template <typename S>
void relu_inplace(Matrix<S>& m) {
  m = m.cwiseMax(S(0));
}

template <typename S>
void mask_relu(Matrix<S>& grad, const Matrix<S>& activation) {
  grad = (activation.array() > S(0)).select(grad, S(0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape

std::size_t NetworkShape::conv1_length() const { return conv_length(beams, conv1_kernel, conv1_stride, "conv1"); }

std::size_t NetworkShape::conv2_length() const {
  return conv_length(conv1_length(), conv2_kernel, conv2_stride, "conv2");
}

std::size_t NetworkShape::action_outputs() const {
  return head == HeadKind::discrete ? kDiscreteActions : kContinuousActionDim;
}

void NetworkShape::validate() const {
  if (frames == 0 || beams == 0) throw ShapeError("network needs at least one frame and one beam");
  for (std::size_t w : {conv1_filters, conv2_filters, fc_lidar, fc_goal_dir, fc_goal_dist, fc_velocity, fc_merge})
    if (w == 0) throw ShapeError("layer widths must be positive");
  (void)conv2_length();
}

NetworkShape NetworkShape::reduced(std::size_t beams, HeadKind head) {
  NetworkShape s;
  s.beams = beams;
  s.conv1_filters = 3;
  s.conv1_kernel = 3;
  s.conv1_stride = 2;
  s.conv2_filters = 4;
  s.conv2_kernel = 2;
  s.conv2_stride = 1;
  s.fc_lidar = 6;
  s.fc_goal_dir = 3;
  s.fc_goal_dist = 2;
  s.fc_velocity = 3;
  s.fc_merge = 7;
  s.head = head;
  return s;
}

template <typename Scalar>
void encode_observation(const ObservationStack& stack, const NetworkShape& shape, Scalar* out) {
  const std::size_t F = shape.frames;
  if (F != kStackFrames) throw ShapeError("network expects " + std::to_string(F) + " frames");
  for (std::size_t f = 0; f < F; ++f) {
    const auto& o = stack.frames[f];
    if (o.lidar.ranges.size() != shape.beams)
      throw ShapeError("observation has " + std::to_string(o.lidar.ranges.size()) + " beams, network expects " +
                       std::to_string(shape.beams));
    for (std::size_t i = 0; i < shape.beams; ++i)
      out[i * F + f] = static_cast<Scalar>(o.lidar.ranges[i] * kLidarScale);
  }
  Scalar* goal_dir = out + F * shape.beams;
  Scalar* goal_dist = goal_dir + 2 * F;
  Scalar* velocity = goal_dist + F;
  for (std::size_t f = 0; f < F; ++f) {
    const auto& o = stack.frames[f];
    goal_dir[2 * f] = static_cast<Scalar>(o.goal_direction.x);
    goal_dir[2 * f + 1] = static_cast<Scalar>(o.goal_direction.y);
    goal_dist[f] = static_cast<Scalar>(o.goal_distance * kDistanceScale);
    velocity[2 * f] = static_cast<Scalar>(o.velocity.v_lin / kMaxLinear);
    velocity[2 * f + 1] = static_cast<Scalar>(o.velocity.v_ang / kMaxAngular);
  }
}

template void encode_observation<float>(const ObservationStack&, const NetworkShape&, float*);
template void encode_observation<double>(const ObservationStack&, const NetworkShape&, double*);

std::size_t TensorInfo::size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

// ---------------------------------------------------------------------------
// Network

template <typename Scalar>
PolicyNetwork<Scalar>::PolicyNetwork(NetworkShape shape) : shape_(shape) {
  shape_.validate();
  const auto& s = shape_;
  const std::size_t F = s.frames;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> dims) {
    TensorInfo t{std::move(name), std::move(dims), offset};
    offset += t.size();
    layout_.push_back(std::move(t));
  };
  add("conv1.weight", {s.conv1_filters, s.conv1_kernel, F});
  add("conv1.bias", {s.conv1_filters});
  add("conv2.weight", {s.conv2_filters, s.conv2_kernel, s.conv1_filters});
  add("conv2.bias", {s.conv2_filters});
  add("fc_lidar.weight", {s.fc_lidar, s.flatten_size()});
  add("fc_lidar.bias", {s.fc_lidar});
  add("fc_goal_dir.weight", {s.fc_goal_dir, 2 * F});
  add("fc_goal_dir.bias", {s.fc_goal_dir});
  add("fc_goal_dist.weight", {s.fc_goal_dist, F});
  add("fc_goal_dist.bias", {s.fc_goal_dist});
  add("fc_velocity.weight", {s.fc_velocity, 2 * F});
  add("fc_velocity.bias", {s.fc_velocity});
  add("fc_merge.weight", {s.fc_merge, s.merge_input()});
  add("fc_merge.bias", {s.fc_merge});
  add("policy.weight", {s.action_outputs(), s.fc_merge});
  add("policy.bias", {s.action_outputs()});
  add("value.weight", {1, s.fc_merge});
  add("value.bias", {1});
  if (s.head == HeadKind::continuous) add("log_std", {kContinuousActionDim});
  params_.assign(offset, Scalar(0));
}

template <typename Scalar>
const TensorInfo& PolicyNetwork<Scalar>::tensor(const std::string& name) const {
  for (const auto& t : layout_)
    if (t.name == name) return t;
  throw ContractError("no tensor named " + name);
}

template <typename Scalar>
void PolicyNetwork<Scalar>::initialize(Rng& rng) {
  std::fill(params_.begin(), params_.end(), Scalar(0));
  for (const auto& t : layout_) {
    if (t.dims.size() < 2) continue;  // biases stay zero
    const std::size_t fan_in = t.size() / t.dims[0];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    if (t.name == "policy.weight" || t.name == "value.weight") bound *= 0.01;
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) params_[t.offset + i] = static_cast<Scalar>(u(rng));
  }
  if (shape_.head == HeadKind::continuous) {
    const auto& ls = tensor("log_std");
    for (std::size_t d = 0; d < kContinuousActionDim; ++d)
      params_[ls.offset + d] = static_cast<Scalar>(std::log(kActionHalfRange[d]));
  }
}

template <typename Scalar>
NetworkOutput<Scalar> PolicyNetwork<Scalar>::forward(const Matrix<Scalar>& input, ForwardCache<Scalar>* cache) const {
  const auto& s = shape_;
  if (static_cast<std::size_t>(input.rows()) != s.input_size())
    throw ShapeError("input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(s.input_size()));
  const Eigen::Index B = input.cols();
  const Eigen::Index F = static_cast<Eigen::Index>(s.frames);
  const Eigen::Index L1 = static_cast<Eigen::Index>(s.conv1_length());
  const Eigen::Index L2 = static_cast<Eigen::Index>(s.conv2_length());
  const Eigen::Index K1 = static_cast<Eigen::Index>(s.conv1_kernel), S1 = static_cast<Eigen::Index>(s.conv1_stride);
  const Eigen::Index K2 = static_cast<Eigen::Index>(s.conv2_kernel), S2 = static_cast<Eigen::Index>(s.conv2_stride);
  const Eigen::Index C1 = static_cast<Eigen::Index>(s.conv1_filters);
  const Eigen::Index C2 = static_cast<Eigen::Index>(s.conv2_filters);

  auto W = [this](const char* name) {
    const auto& t = tensor(name);
    return ConstWeights<Scalar>(params_.data() + t.offset, static_cast<Eigen::Index>(t.dims[0]),
                                static_cast<Eigen::Index>(t.size() / t.dims[0]));
  };
  auto b = [this](const char* name) {
    const auto& t = tensor(name);
    return ConstVec<Scalar>(params_.data() + t.offset, static_cast<Eigen::Index>(t.size()));
  };

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.batch = static_cast<std::size_t>(B);
  c.input = input;

  // conv1 via im2col: a window of K1 beams x F frames is contiguous in the input.
  c.cols1.resize(K1 * F, B * L1);
  for (Eigen::Index n = 0; n < B; ++n)
    for (Eigen::Index j = 0; j < L1; ++j)
      c.cols1.col(n * L1 + j) = input.col(n).segment(j * S1 * F, K1 * F);
  c.act1.noalias() = W("conv1.weight") * c.cols1;
  c.act1.colwise() += b("conv1.bias");
  relu_inplace(c.act1);

  c.cols2.resize(K2 * C1, B * L2);
  for (Eigen::Index n = 0; n < B; ++n)
    for (Eigen::Index j = 0; j < L2; ++j)
      c.cols2.col(n * L2 + j) = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(
          c.act1.data() + (n * L1 + j * S2) * C1, K2 * C1);
  c.act2.noalias() = W("conv2.weight") * c.cols2;
  c.act2.colwise() += b("conv2.bias");
  relu_inplace(c.act2);

  // Flatten is position-major (j * C2 + channel), a zero-copy view of act2.
  Eigen::Map<const Matrix<Scalar>> flat(c.act2.data(), C2 * L2, B);
  c.h_lidar.noalias() = W("fc_lidar.weight") * flat;
  c.h_lidar.colwise() += b("fc_lidar.bias");
  relu_inplace(c.h_lidar);

  const Eigen::Index base = F * static_cast<Eigen::Index>(s.beams);
  c.h_goal_dir.noalias() = W("fc_goal_dir.weight") * input.middleRows(base, 2 * F);
  c.h_goal_dir.colwise() += b("fc_goal_dir.bias");
  relu_inplace(c.h_goal_dir);
  c.h_goal_dist.noalias() = W("fc_goal_dist.weight") * input.middleRows(base + 2 * F, F);
  c.h_goal_dist.colwise() += b("fc_goal_dist.bias");
  relu_inplace(c.h_goal_dist);
  c.h_velocity.noalias() = W("fc_velocity.weight") * input.middleRows(base + 3 * F, 2 * F);
  c.h_velocity.colwise() += b("fc_velocity.bias");
  relu_inplace(c.h_velocity);

  c.concat.resize(static_cast<Eigen::Index>(s.merge_input()), B);
  c.concat << c.h_lidar, c.h_goal_dir, c.h_goal_dist, c.h_velocity;
  c.h_merge.noalias() = W("fc_merge.weight") * c.concat;
  c.h_merge.colwise() += b("fc_merge.bias");
  relu_inplace(c.h_merge);

  NetworkOutput<Scalar> out;
  out.policy.noalias() = W("policy.weight") * c.h_merge;
  out.policy.colwise() += b("policy.bias");
  out.value.noalias() = W("value.weight") * c.h_merge;
  out.value.colwise() += b("value.bias");
  if (s.head == HeadKind::continuous) {
    const auto ls = b("log_std");
    for (std::size_t d = 0; d < kContinuousActionDim; ++d) out.log_std[d] = ls[static_cast<Eigen::Index>(d)];
  }
  return out;
}

template <typename Scalar>
void PolicyNetwork<Scalar>::backward(const ForwardCache<Scalar>& c, const OutputGradient<Scalar>& up,
                                     std::span<Scalar> gradient) const {
  if (!c.valid()) throw ContractError("backward() needs activations retained by forward()");
  if (gradient.size() != params_.size()) throw ShapeError("gradient buffer has the wrong length");
  const auto& s = shape_;
  const Eigen::Index B = static_cast<Eigen::Index>(c.batch);
  if (up.policy.cols() != B || up.value.cols() != B ||
      up.policy.rows() != static_cast<Eigen::Index>(s.action_outputs()) || up.value.rows() != 1)
    throw ShapeError("upstream gradient does not match the cached batch");
  const Eigen::Index F = static_cast<Eigen::Index>(s.frames);
  const Eigen::Index L1 = static_cast<Eigen::Index>(s.conv1_length());
  const Eigen::Index L2 = static_cast<Eigen::Index>(s.conv2_length());
  const Eigen::Index K2 = static_cast<Eigen::Index>(s.conv2_kernel), S2 = static_cast<Eigen::Index>(s.conv2_stride);
  const Eigen::Index C1 = static_cast<Eigen::Index>(s.conv1_filters);
  const Eigen::Index C2 = static_cast<Eigen::Index>(s.conv2_filters);

  auto W = [this](const char* name) {
    const auto& t = tensor(name);
    return ConstWeights<Scalar>(params_.data() + t.offset, static_cast<Eigen::Index>(t.dims[0]),
                                static_cast<Eigen::Index>(t.size() / t.dims[0]));
  };
  auto gW = [&](const char* name) {
    const auto& t = tensor(name);
    return Weights<Scalar>(gradient.data() + t.offset, static_cast<Eigen::Index>(t.dims[0]),
                           static_cast<Eigen::Index>(t.size() / t.dims[0]));
  };
  auto gb = [&](const char* name) {
    const auto& t = tensor(name);
    return Vec<Scalar>(gradient.data() + t.offset, static_cast<Eigen::Index>(t.size()));
  };

  // Heads.
  gW("policy.weight").noalias() += up.policy * c.h_merge.transpose();
  gb("policy.bias") += up.policy.rowwise().sum();
  gW("value.weight").noalias() += up.value * c.h_merge.transpose();
  gb("value.bias") += up.value.rowwise().sum();
  if (s.head == HeadKind::continuous) {
    auto g = gb("log_std");
    for (std::size_t d = 0; d < kContinuousActionDim; ++d) g[static_cast<Eigen::Index>(d)] += up.log_std[d];
  }

  Matrix<Scalar> d_merge = W("policy.weight").transpose() * up.policy;
  d_merge.noalias() += W("value.weight").transpose() * up.value;
  mask_relu(d_merge, c.h_merge);
  gW("fc_merge.weight").noalias() += d_merge * c.concat.transpose();
  gb("fc_merge.bias") += d_merge.rowwise().sum();
  const Matrix<Scalar> d_concat = W("fc_merge.weight").transpose() * d_merge;

  Eigen::Index row = 0;
  auto branch = [&](const Matrix<Scalar>& act, const char* w, const char* bias, const auto& branch_input) {
    Matrix<Scalar> d = d_concat.middleRows(row, act.rows());
    row += act.rows();
    mask_relu(d, act);
    gW(w).noalias() += d * branch_input.transpose();
    gb(bias) += d.rowwise().sum();
    return d;
  };

  Eigen::Map<const Matrix<Scalar>> flat(c.act2.data(), C2 * L2, B);
  const Matrix<Scalar> d_lidar = branch(c.h_lidar, "fc_lidar.weight", "fc_lidar.bias", flat);
  const Eigen::Index base = F * static_cast<Eigen::Index>(s.beams);
  branch(c.h_goal_dir, "fc_goal_dir.weight", "fc_goal_dir.bias", c.input.middleRows(base, 2 * F));
  branch(c.h_goal_dist, "fc_goal_dist.weight", "fc_goal_dist.bias", c.input.middleRows(base + 2 * F, F));
  branch(c.h_velocity, "fc_velocity.weight", "fc_velocity.bias", c.input.middleRows(base + 3 * F, 2 * F));

  // conv2
  Matrix<Scalar> d_act2(C2, B * L2);
  Eigen::Map<Matrix<Scalar>>(d_act2.data(), C2 * L2, B).noalias() = W("fc_lidar.weight").transpose() * d_lidar;
  mask_relu(d_act2, c.act2);
  gW("conv2.weight").noalias() += d_act2 * c.cols2.transpose();
  gb("conv2.bias") += d_act2.rowwise().sum();
  const Matrix<Scalar> d_cols2 = W("conv2.weight").transpose() * d_act2;

  // col2im back onto conv1 activations.
  Matrix<Scalar> d_act1 = Matrix<Scalar>::Zero(C1, B * L1);
  for (Eigen::Index n = 0; n < B; ++n)
    for (Eigen::Index j = 0; j < L2; ++j)
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(d_act1.data() + (n * L1 + j * S2) * C1, K2 * C1) +=
          d_cols2.col(n * L2 + j);
  mask_relu(d_act1, c.act1);
  gW("conv1.weight").noalias() += d_act1 * c.cols1.transpose();
  gb("conv1.bias") += d_act1.rowwise().sum();
}

template class PolicyNetwork<float>;
template class PolicyNetwork<double>;

// ---------------------------------------------------------------------------
// Distributions

std::vector<double> ActionDistribution::log_probs() const {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double ActionDistribution::entropy() const {
  if (kind == HeadKind::discrete) {
    double h = 0.0;
    for (double lp : log_probs()) h -= std::exp(lp) * lp;
    return h;
  }
  double h = 0.0;
  for (double sd : std_dev) h += 0.5 + 0.5 * std::log(2.0 * std::numbers::pi) + std::log(sd);
  return h;
}

std::array<double, kContinuousActionDim> continuous_mean(std::span<const double> raw) {
  std::array<double, kContinuousActionDim> m{};
  for (std::size_t d = 0; d < kContinuousActionDim; ++d) m[d] = kActionCenter[d] + kActionHalfRange[d] * raw[d];
  return m;
}

template <typename Scalar>
ActionDistribution distribution_at(const NetworkOutput<Scalar>& out, std::size_t sample, HeadKind kind) {
  ActionDistribution d;
  d.kind = kind;
  const auto col = static_cast<Eigen::Index>(sample);
  if (kind == HeadKind::discrete) {
    d.logits.resize(static_cast<std::size_t>(out.policy.rows()));
    for (Eigen::Index i = 0; i < out.policy.rows(); ++i) d.logits[static_cast<std::size_t>(i)] = out.policy(i, col);
  } else {
    std::array<double, kContinuousActionDim> raw{};
    for (std::size_t i = 0; i < kContinuousActionDim; ++i)
      raw[i] = static_cast<double>(out.policy(static_cast<Eigen::Index>(i), col));
    d.mean = continuous_mean(raw);
    for (std::size_t i = 0; i < kContinuousActionDim; ++i) d.std_dev[i] = std::exp(static_cast<double>(out.log_std[i]));
  }
  return d;
}

template ActionDistribution distribution_at<float>(const NetworkOutput<float>&, std::size_t, HeadKind);
template ActionDistribution distribution_at<double>(const NetworkOutput<double>&, std::size_t, HeadKind);

double gaussian_log_prob(std::span<const double> x, std::span<const double> mean, std::span<const double> std_dev) {
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) / std_dev[i];
    lp += -0.5 * z * z - std::log(std_dev[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

SampledAction sample_action(const ActionDistribution& dist, Rng& rng) {
  SampledAction s;
  if (dist.kind == HeadKind::discrete) {
    const auto lp = dist.log_probs();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double target = u(rng);
    double acc = 0.0;
    s.index = lp.size() - 1;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      acc += std::exp(lp[i]);
      if (target < acc) {
        s.index = i;
        break;
      }
    }
    s.log_prob = lp[s.index];
    s.action = discretize_action(s.index);
    return s;
  }
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t d = 0; d < kContinuousActionDim; ++d) s.raw[d] = dist.mean[d] + dist.std_dev[d] * n(rng);
  s.log_prob = gaussian_log_prob(s.raw, dist.mean, dist.std_dev);
  s.action = clamp_action({s.raw[0], s.raw[1]});
  return s;
}

SampledAction greedy_action(const ActionDistribution& dist) {
  SampledAction s;
  if (dist.kind == HeadKind::discrete) {
    s.index = static_cast<std::size_t>(std::max_element(dist.logits.begin(), dist.logits.end()) - dist.logits.begin());
    s.log_prob = dist.log_probs()[s.index];
    s.action = discretize_action(s.index);
    return s;
  }
  s.raw = dist.mean;
  s.log_prob = gaussian_log_prob(s.raw, dist.mean, dist.std_dev);
  s.action = clamp_action({s.raw[0], s.raw[1]});
  return s;
}

Action discretize_action(std::size_t index) {
  static constexpr std::array<double, 5> kAngular{-1.5, -0.75, 0.0, 0.75, 1.5};
  if (index >= kDiscreteActions) throw ContractError("discrete action index " + std::to_string(index) + " out of range");
  return {index >= 5 ? kMaxLinear : 0.0, kAngular[index % 5]};
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar>
Adam<Scalar>::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(size, Scalar(0)), v_(size, Scalar(0)) {}

template <typename Scalar>
void Adam<Scalar>::step(std::span<Scalar> params, std::span<const Scalar> gradient, double learning_rate) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) throw ShapeError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar step = static_cast<Scalar>(learning_rate / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  const Scalar eps = static_cast<Scalar>(epsilon_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Scalar g = gradient[i];
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g * g;
    params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

template <typename Scalar>
double clip_gradient_norm(std::span<Scalar> gradient, double max_norm) {
  double sq = 0.0;
  for (Scalar g : gradient) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar scale = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (Scalar& g : gradient) g *= scale;
  }
  return norm;
}

template double clip_gradient_norm<float>(std::span<float>, double);
template double clip_gradient_norm<double>(std::span<double>, double);

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kMagic[8] = {'M', 'R', 'N', 'A', 'V', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  std::string take() { return std::move(out_); }
  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ParseError("checkpoint is truncated");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint64_t> manifest(const NetworkShape& s) {
  return {s.beams,         s.frames,       s.conv1_filters, s.conv1_kernel, s.conv1_stride,
          s.conv2_filters, s.conv2_kernel, s.conv2_stride,  s.fc_lidar,     s.fc_goal_dir,
          s.fc_goal_dist,  s.fc_velocity,  s.fc_merge,      static_cast<std::uint64_t>(s.head)};
}

}  // namespace

std::string serialize_checkpoint(const PolicyNetwork<float>& net, std::string_view metadata) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(sizeof(float));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(metadata.size()));
  w.bytes(metadata.data(), metadata.size());
  const auto fields = manifest(net.shape());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(fields.size()));
  for (auto f : fields) w.uint<std::uint64_t>(f);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(net.layout().size()));
  for (const auto& t : net.layout()) {
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.uint<std::uint64_t>(d);
  }
  w.uint<std::uint64_t>(net.parameter_count());
  for (float p : net.parameters()) w.f32(p);
  const std::uint64_t sum = fnv1a(w.data());
  w.uint<std::uint64_t>(sum);
  return w.take();
}

PolicyNetwork<float> parse_checkpoint(const std::string& bytes, std::string* metadata) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a checkpoint file");
  if (const auto v = r.uint<std::uint32_t>(); v != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(v));
  if (r.uint<std::uint32_t>() != sizeof(float)) throw ParseError("checkpoint scalar type is not float32");
  const std::string meta = r.str(r.uint<std::uint32_t>());
  const auto n_fields = r.uint<std::uint32_t>();
  if (n_fields != 14) throw ParseError("unexpected shape manifest length");
  std::vector<std::uint64_t> f(n_fields);
  for (auto& x : f) x = r.uint<std::uint64_t>();
  if (f[13] > 1) throw ParseError("unknown head kind");
  NetworkShape shape;
  shape.beams = f[0];
  shape.frames = f[1];
  shape.conv1_filters = f[2];
  shape.conv1_kernel = f[3];
  shape.conv1_stride = f[4];
  shape.conv2_filters = f[5];
  shape.conv2_kernel = f[6];
  shape.conv2_stride = f[7];
  shape.fc_lidar = f[8];
  shape.fc_goal_dir = f[9];
  shape.fc_goal_dist = f[10];
  shape.fc_velocity = f[11];
  shape.fc_merge = f[12];
  shape.head = static_cast<HeadKind>(f[13]);

  PolicyNetwork<float> net(shape);  // validates conv arithmetic
  const auto n_tensors = r.uint<std::uint32_t>();
  if (n_tensors != net.layout().size()) throw ShapeError("checkpoint tensor count does not match its shape manifest");
  for (const auto& t : net.layout()) {
    const auto len = r.uint<std::uint16_t>();
    const std::string name = r.str(len);
    const auto rank = r.uint<std::uint8_t>();
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.uint<std::uint64_t>();
    if (name != t.name || dims != t.dims) throw ShapeError("checkpoint tensor '" + name + "' does not match " + t.name);
  }
  if (r.uint<std::uint64_t>() != net.parameter_count()) throw ShapeError("checkpoint parameter count mismatch");
  for (float& p : net.parameters()) p = r.f32();
  const std::size_t body = r.pos();
  if (r.uint<std::uint64_t>() != fnv1a(std::string_view(bytes).substr(0, body)))
    throw ParseError("checkpoint checksum mismatch");
  if (r.pos() != bytes.size()) throw ParseError("trailing bytes after checkpoint");
  if (metadata) *metadata = meta;
  return net;
}

void save_checkpoint(const PolicyNetwork<float>& net, const std::filesystem::path& path, std::string_view metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const auto bytes = serialize_checkpoint(net, metadata);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PolicyNetwork<float> load_checkpoint(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), metadata);
}

void check_compatible(const NetworkShape& shape, const SimConfig& sim) {
  if (shape.beams != sim.lidar_beams)
    throw ShapeError("network expects " + std::to_string(shape.beams) + " lidar beams, simulator produces " +
                     std::to_string(sim.lidar_beams));
  if (shape.frames != kStackFrames)
    throw ShapeError("network expects " + std::to_string(shape.frames) + " stacked frames, simulator stacks " +
                     std::to_string(kStackFrames));
}

}  // namespace mrnav
