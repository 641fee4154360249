#pragma once

// ConvNet-LSTM actor-critic with hand-written forward and backward passes.
//
//   input H x W x C  -> conv1 + ReLU -> conv2 + ReLU -> flatten
//   -> FC + ReLU -> LSTM -> { policy logits (softmax), value }
//
// Valid padding everywhere, no pooling. All parameters live in one flat
// buffer; tensors are views into it in declaration order, which is also the
// checkpoint order:
//
//   conv1.weight [c1 x (k1*k1*C)]   cols ordered (ky, kx, channel)
//   conv1.bias   [c1]
//   conv2.weight [c2 x (k2*k2*c1)]
//   conv2.bias   [c2]
//   fc.weight    [F x flat]         flat ordered (y, x, channel)
//   fc.bias      [F]
//   lstm.weight  [4L x (F + L)]     gate blocks input, forget, cell, output;
//                                   cols are [fc output ; previous h]
//   lstm.bias    [4L]
//   policy.weight [A x L], policy.bias [A]
//   value.weight  [1 x L], value.bias  [1]

#include <array>
#include <cstdint>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "atg/action.hpp"

namespace atg {

struct Architecture {
  int input_h = 84;
  int input_w = 84;
  int input_c = 3;
  int conv1_channels = 16;
  int conv1_kernel = 8;
  int conv1_stride = 4;
  int conv2_channels = 32;
  int conv2_kernel = 4;
  int conv2_stride = 2;
  int fc_units = 256;
  int lstm_units = 256;
  int actions = static_cast<int>(kNumActions);

  // 12x12 input, 2 and 4 channels, 8-unit FC and LSTM. Kernels shrink to
  // 4/2 and 3/2 so the valid convolutions still fit.
  static Architecture reduced();

  int conv1_h() const { return (input_h - conv1_kernel) / conv1_stride + 1; }
  int conv1_w() const { return (input_w - conv1_kernel) / conv1_stride + 1; }
  int conv2_h() const { return (conv1_h() - conv2_kernel) / conv2_stride + 1; }
  int conv2_w() const { return (conv1_w() - conv2_kernel) / conv2_stride + 1; }
  int flat_size() const { return conv2_h() * conv2_w() * conv2_channels; }
  std::size_t input_size() const {
    return static_cast<std::size_t>(input_h) * input_w * input_c;
  }
  std::size_t param_count() const;
  std::array<std::int32_t, 12> fields() const;
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class TensorId : int {
  Conv1W, Conv1B, Conv2W, Conv2B, FcW, FcB, LstmW, LstmB, PolicyW, PolicyB, ValueW, ValueB,
};
inline constexpr int kTensorCount = 12;

struct TensorInfo {
  std::string_view name;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
  std::size_t size() const { return rows * cols; }
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

std::array<TensorInfo, kTensorCount> tensor_layout(const Architecture& arch);

// Cache-line aligned storage. Vectorized reductions peel a different number
// of leading elements depending on the start address, so the alignment must
// be fixed for results to be reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

// Flat parameter (or gradient) buffer with per-tensor views.
template <typename S>
class NetParams {
 public:
  NetParams() = default;
  explicit NetParams(const Architecture& arch);

  const Architecture& arch() const noexcept { return arch_; }
  std::span<S> flat() noexcept { return values_; }
  std::span<const S> flat() const noexcept { return values_; }
  std::span<S> tensor(TensorId id) noexcept;
  std::span<const S> tensor(TensorId id) const noexcept;
  const TensorInfo& info(TensorId id) const noexcept {
    return layout_[static_cast<std::size_t>(id)];
  }
  void set_zero() noexcept;

  template <typename T>
  NetParams<T> cast() const {
    NetParams<T> out(arch_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.flat()[i] = static_cast<T>(values_[i]);
    return out;
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;

 private:
  Architecture arch_;
  std::array<TensorInfo, kTensorCount> layout_{};
  std::vector<S, AlignedAllocator<S>> values_;
};

template <typename S>
struct RecurrentState {
  std::vector<S> h;
  std::vector<S> c;

  static RecurrentState zeros(const Architecture& arch) {
    return {std::vector<S>(static_cast<std::size_t>(arch.lstm_units), S(0)),
            std::vector<S>(static_cast<std::size_t>(arch.lstm_units), S(0))};
  }
  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

struct PolicyOut {
  std::array<double, kNumActions> logits{};
  std::array<double, kNumActions> probs{};
  double value = 0.0;
};

// Uniform in +-1/sqrt(fan_in) per weight tensor, zero biases, forget-gate
// bias 1. The policy head is further scaled by 0.01 so initial policies are
// near uniform.
template <typename S>
NetParams<S> init_params(const Architecture& arch, std::uint64_t seed);

// Activations of up to `capacity` consecutive steps evaluated with a single
// parameter snapshot, kept for the backward pass.
template <typename S>
class ForwardTape {
 public:
  ForwardTape(const Architecture& arch, int capacity);
  ~ForwardTape();
  ForwardTape(ForwardTape&&) noexcept;
  ForwardTape& operator=(ForwardTape&&) noexcept;

  // Starts a new window from `initial`.
  void reset(const RecurrentState<S>& initial);
  // Forward one frame and record it. Throws NumericFault naming the layer
  // when an activation turns non-finite, UsageError when full.
  PolicyOut step(const NetParams<S>& params, std::span<const float> frame);

  int size() const noexcept;
  int capacity() const noexcept;
  const RecurrentState<S>& initial_state() const noexcept;
  // Recurrent state after the last recorded step.
  RecurrentState<S> current_state() const;
  const PolicyOut& output(int t) const;

  struct Impl;
  const Impl& impl() const noexcept { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

// Pure single-step forward: does not touch its inputs.
template <typename S>
std::pair<PolicyOut, RecurrentState<S>> forward(const NetParams<S>& params,
                                                std::span<const float> frame,
                                                const RecurrentState<S>& rstate);

// Inverse-CDF draw over the fixed action order. Throws UsageError when the
// distribution is negative or does not sum to 1 within 1e-6.
Action sample_action(std::span<const double> probs, std::mt19937_64& rng);
Action sample_action(std::span<const double> probs, std::uint64_t seed);
Action greedy_action(std::span<const double> probs);

// -sum p ln p, with 0 ln 0 = 0.
double entropy(std::span<const double> probs);

struct LossDiagnostics {
  double policy_loss = 0.0;   // sum_t -(R_t - V_t) log pi(a_t|s_t)
  double value_loss = 0.0;    // sum_t 1/2 (R_t - V_t)^2
  double entropy = 0.0;       // mean_t H(pi(.|s_t))
  double entropy_loss = 0.0;  // -beta sum_t H
  double grad_norm = 0.0;     // global L2 norm of the returned gradient
};

// Gradient of
//   L = sum_t [ -(R_t - V_t) log pi(a_t|s_t) - beta H(pi(.|s_t)) + 1/2 (R_t - V_t)^2 ]
// with the advantage held constant in the policy term, back-propagated
// through time across the recorded window (the initial recurrent state is
// a constant). Descending along `grads` ascends the policy objective and
// descends the value regression. Overwrites `grads`.
template <typename S>
LossDiagnostics loss_and_grads(const NetParams<S>& params, const ForwardTape<S>& tape,
                               std::span<const Action> actions, std::span<const double> returns,
                               double beta, NetParams<S>& grads);

template <typename S>
struct Rollout {
  std::vector<std::vector<float>> frames;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<double> values;
  RecurrentState<S> initial_recurrent;
  double bootstrap_value = 0.0;
  bool terminal = false;

  void validate(int max_length) const;
};

// Recomputes the forward window from the rollout's frames, then as above.
template <typename S>
LossDiagnostics loss_and_grads(const NetParams<S>& params, const Rollout<S>& rollout,
                               std::span<const double> returns, double beta,
                               NetParams<S>& grads);

// d logit[action] / d input for one step from `rstate`, laid out like the
// input frame.
template <typename S>
std::vector<S> logit_input_gradient(const NetParams<S>& params, std::span<const float> frame,
                                    const RecurrentState<S>& rstate, Action action);

}  // namespace atg
