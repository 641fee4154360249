#include "atg/policynet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atg/errors.hpp"

namespace atg {

// ------------------------------------------------------------ architecture

Architecture Architecture::reduced() {
  Architecture a;
  a.input_h = 12;
  a.input_w = 12;
  a.input_c = 3;
  a.conv1_channels = 2;
  a.conv1_kernel = 4;
  a.conv1_stride = 2;
  a.conv2_channels = 4;
  a.conv2_kernel = 3;
  a.conv2_stride = 2;
  a.fc_units = 8;
  a.lstm_units = 8;
  return a;
}

std::array<std::int32_t, 12> Architecture::fields() const {
  return {input_h,        input_w,      input_c,      conv1_channels,
          conv1_kernel,   conv1_stride, conv2_channels, conv2_kernel,
          conv2_stride,   fc_units,     lstm_units,   actions};
}

void Architecture::validate() const {
  for (std::int32_t f : fields())
    if (f <= 0) throw ValidationError("architecture", "all dimensions must be positive");
  if (actions != static_cast<int>(kNumActions))
    throw ValidationError("architecture", "policy head must have 6 actions");
  if (input_h < conv1_kernel || input_w < conv1_kernel)
    throw ValidationError("architecture", "conv1 kernel larger than input");
  if (conv1_h() < conv2_kernel || conv1_w() < conv2_kernel)
    throw ValidationError("architecture", "conv2 kernel larger than conv1 output");
}

std::array<TensorInfo, kTensorCount> tensor_layout(const Architecture& a) {
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t k1 = u(a.conv1_kernel * a.conv1_kernel * a.input_c);
  const std::size_t k2 = u(a.conv2_kernel * a.conv2_kernel * a.conv1_channels);
  std::array<TensorInfo, kTensorCount> t{{
      {"conv1.weight", u(a.conv1_channels), k1, 0},
      {"conv1.bias", u(a.conv1_channels), 1, 0},
      {"conv2.weight", u(a.conv2_channels), k2, 0},
      {"conv2.bias", u(a.conv2_channels), 1, 0},
      {"fc.weight", u(a.fc_units), u(a.flat_size()), 0},
      {"fc.bias", u(a.fc_units), 1, 0},
      {"lstm.weight", u(4 * a.lstm_units), u(a.fc_units + a.lstm_units), 0},
      {"lstm.bias", u(4 * a.lstm_units), 1, 0},
      {"policy.weight", u(a.actions), u(a.lstm_units), 0},
      {"policy.bias", u(a.actions), 1, 0},
      {"value.weight", 1, u(a.lstm_units), 0},
      {"value.bias", 1, 1, 0},
  }};
  std::size_t offset = 0;
  for (TensorInfo& info : t) {
    info.offset = offset;
    offset += info.size();
  }
  return t;
}

std::size_t Architecture::param_count() const {
  const auto layout = tensor_layout(*this);
  return layout.back().offset + layout.back().size();
}

// ---------------------------------------------------------------- params

template <typename S>
NetParams<S>::NetParams(const Architecture& arch)
    : arch_(arch), layout_(tensor_layout(arch)), values_(arch.param_count(), S(0)) {
  arch.validate();
}

template <typename S>
std::span<S> NetParams<S>::tensor(TensorId id) noexcept {
  const TensorInfo& i = info(id);
  return std::span<S>(values_).subspan(i.offset, i.size());
}

template <typename S>
std::span<const S> NetParams<S>::tensor(TensorId id) const noexcept {
  const TensorInfo& i = info(id);
  return std::span<const S>(values_).subspan(i.offset, i.size());
}

template <typename S>
void NetParams<S>::set_zero() noexcept {
  std::fill(values_.begin(), values_.end(), S(0));
}

template <typename S>
NetParams<S> init_params(const Architecture& arch, std::uint64_t seed) {
  NetParams<S> p(arch);
  std::mt19937_64 rng(seed);
  const auto fill = [&](TensorId id, double fan_in, double scale) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (S& v : p.tensor(id)) v = static_cast<S>(scale * dist(rng));
  };
  fill(TensorId::Conv1W, static_cast<double>(p.info(TensorId::Conv1W).cols), 1.0);
  fill(TensorId::Conv2W, static_cast<double>(p.info(TensorId::Conv2W).cols), 1.0);
  fill(TensorId::FcW, static_cast<double>(p.info(TensorId::FcW).cols), 1.0);
  fill(TensorId::LstmW, static_cast<double>(p.info(TensorId::LstmW).cols), 1.0);
  fill(TensorId::PolicyW, static_cast<double>(arch.lstm_units), 0.01);
  fill(TensorId::ValueW, static_cast<double>(arch.lstm_units), 1.0);
  auto lstm_bias = p.tensor(TensorId::LstmB);
  const auto L = static_cast<std::size_t>(arch.lstm_units);
  std::fill(lstm_bias.begin() + static_cast<std::ptrdiff_t>(L),
            lstm_bias.begin() + static_cast<std::ptrdiff_t>(2 * L), S(1));
  return p;
}

// ------------------------------------------------------------------- tape

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const Mat<S>>;
template <typename S>
using CRowMap = Eigen::Map<const RowVec<S>>;
template <typename S>
using RowMap = Eigen::Map<RowVec<S>>;

template <typename S>
CMatMap<S> cmat(const NetParams<S>& p, TensorId id) {
  const TensorInfo& i = p.info(id);
  return CMatMap<S>(p.tensor(id).data(), static_cast<Eigen::Index>(i.rows),
                    static_cast<Eigen::Index>(i.cols));
}
template <typename S>
MatMap<S> mmat(NetParams<S>& p, TensorId id) {
  const TensorInfo& i = p.info(id);
  return MatMap<S>(p.tensor(id).data(), static_cast<Eigen::Index>(i.rows),
                   static_cast<Eigen::Index>(i.cols));
}
template <typename S>
CRowMap<S> crow(const NetParams<S>& p, TensorId id) {
  return CRowMap<S>(p.tensor(id).data(), static_cast<Eigen::Index>(p.tensor(id).size()));
}
template <typename S>
RowMap<S> mrow(NetParams<S>& p, TensorId id) {
  return RowMap<S>(p.tensor(id).data(), static_cast<Eigen::Index>(p.tensor(id).size()));
}

// Unrolls k x k x C patches with stride s from an (in_h x in_w x C) HWC
// image into rows of `patches`, one per output position.
template <typename In, typename S>
void im2col(const In* input, int in_w, int channels, int k, int s, int out_h, int out_w,
            S* patches) {
  const int run = k * channels;
  const int K = k * run;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      S* row = patches + static_cast<std::ptrdiff_t>(oy * out_w + ox) * K;
      for (int ky = 0; ky < k; ++ky) {
        const In* src = input + (static_cast<std::ptrdiff_t>(oy * s + ky) * in_w + ox * s) * channels;
        S* dst = row + ky * run;
        for (int n = 0; n < run; ++n) dst[n] = static_cast<S>(src[n]);
      }
    }
  }
}

template <typename S>
void col2im_add(const S* patches, int in_w, int channels, int k, int s, int out_h, int out_w,
                S* image) {
  const int run = k * channels;
  const int K = k * run;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const S* row = patches + static_cast<std::ptrdiff_t>(oy * out_w + ox) * K;
      for (int ky = 0; ky < k; ++ky) {
        S* dst = image + (static_cast<std::ptrdiff_t>(oy * s + ky) * in_w + ox * s) * channels;
        const S* src = row + ky * run;
        for (int n = 0; n < run; ++n) dst[n] += src[n];
      }
    }
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

void softmax(const std::array<double, kNumActions>& logits, std::array<double, kNumActions>& probs) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < kNumActions; ++k) {
    probs[k] = std::exp(logits[k] - m);
    z += probs[k];
  }
  for (double& p : probs) p /= z;
}

std::array<double, kNumActions> log_softmax(const std::array<double, kNumActions>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double lse = m + std::log(z);
  std::array<double, kNumActions> out{};
  for (std::size_t k = 0; k < kNumActions; ++k) out[k] = logits[k] - lse;
  return out;
}

}  // namespace

template <typename S>
struct ForwardTape<S>::Impl {
  Architecture arch;
  int capacity = 0;
  int size = 0;
  int P1 = 0, K1 = 0, P2 = 0, K2 = 0, F = 0, L = 0;

  Mat<S> patches1;  // [cap*P1 x K1]
  Mat<S> conv1;     // [cap*P1 x c1], post-ReLU
  Mat<S> patches2;  // [cap*P2 x K2]
  Mat<S> conv2;     // [cap*P2 x c2], post-ReLU; step t is a contiguous flat row
  Mat<S> xh;        // [cap x (F + L)]: post-ReLU fc output, previous h
  Mat<S> gates;     // [cap x 4L], activated i, f, g, o
  Mat<S> c_prev;    // [cap x L]
  Mat<S> c;         // [cap x L]
  Mat<S> tanh_c;    // [cap x L]
  Mat<S> h;         // [cap x L]
  std::vector<PolicyOut> outputs;
  RecurrentState<S> initial;

  Impl(const Architecture& a, int cap) : arch(a), capacity(cap) {
    a.validate();
    if (cap < 1) throw UsageError("ForwardTape: capacity must be >= 1");
    P1 = a.conv1_h() * a.conv1_w();
    K1 = a.conv1_kernel * a.conv1_kernel * a.input_c;
    P2 = a.conv2_h() * a.conv2_w();
    K2 = a.conv2_kernel * a.conv2_kernel * a.conv1_channels;
    F = a.fc_units;
    L = a.lstm_units;
    patches1.resize(cap * P1, K1);
    conv1.resize(cap * P1, a.conv1_channels);
    patches2.resize(cap * P2, K2);
    conv2.resize(cap * P2, a.conv2_channels);
    xh.resize(cap, F + L);
    gates.resize(cap, 4 * L);
    c_prev.resize(cap, L);
    c.resize(cap, L);
    tanh_c.resize(cap, L);
    h.resize(cap, L);
    outputs.resize(static_cast<std::size_t>(cap));
    initial = RecurrentState<S>::zeros(a);
  }

  [[noreturn]] void fault(const char* layer) {
    throw NumericFault(layer, "non-finite activation");
  }

  PolicyOut step(const NetParams<S>& params, std::span<const float> frame) {
    if (size >= capacity) throw UsageError("ForwardTape: window is full");
    if (frame.size() != arch.input_size())
      throw UsageError("ForwardTape: frame has " + std::to_string(frame.size()) +
                       " values, expected " + std::to_string(arch.input_size()));
    if (!(params.arch() == arch)) throw UsageError("ForwardTape: architecture mismatch");
    const int t = size;
    const auto& a = arch;

    // conv1
    im2col(frame.data(), a.input_w, a.input_c, a.conv1_kernel, a.conv1_stride, a.conv1_h(),
           a.conv1_w(), patches1.data() + static_cast<std::ptrdiff_t>(t) * P1 * K1);
    auto c1 = conv1.middleRows(t * P1, P1);
    c1.noalias() = patches1.middleRows(t * P1, P1) * cmat(params, TensorId::Conv1W).transpose();
    c1.rowwise() += crow(params, TensorId::Conv1B);
    c1 = c1.cwiseMax(S(0));
    if (!all_finite(c1)) fault("conv1");

    // conv2
    im2col(conv1.data() + static_cast<std::ptrdiff_t>(t) * P1 * a.conv1_channels, a.conv1_w(),
           a.conv1_channels, a.conv2_kernel, a.conv2_stride, a.conv2_h(), a.conv2_w(),
           patches2.data() + static_cast<std::ptrdiff_t>(t) * P2 * K2);
    auto c2 = conv2.middleRows(t * P2, P2);
    c2.noalias() = patches2.middleRows(t * P2, P2) * cmat(params, TensorId::Conv2W).transpose();
    c2.rowwise() += crow(params, TensorId::Conv2B);
    c2 = c2.cwiseMax(S(0));
    if (!all_finite(c2)) fault("conv2");

    // fc
    const CRowMap<S> flat(conv2.data() + static_cast<std::ptrdiff_t>(t) * P2 * a.conv2_channels,
                          a.flat_size());
    auto fc = xh.row(t).head(F);
    fc.noalias() = flat * cmat(params, TensorId::FcW).transpose();
    fc += crow(params, TensorId::FcB);
    fc = fc.cwiseMax(S(0));
    if (!all_finite(fc)) fault("fc");

    // lstm
    if (t == 0) {
      xh.row(t).tail(L) = CRowMap<S>(initial.h.data(), L);
      c_prev.row(t) = CRowMap<S>(initial.c.data(), L);
    } else {
      xh.row(t).tail(L) = h.row(t - 1);
      c_prev.row(t) = c.row(t - 1);
    }
    auto z = gates.row(t);
    z.noalias() = xh.row(t) * cmat(params, TensorId::LstmW).transpose();
    z += crow(params, TensorId::LstmB);
    auto zi = z.segment(0, L).array();
    auto zf = z.segment(L, L).array();
    auto zg = z.segment(2 * L, L).array();
    auto zo = z.segment(3 * L, L).array();
    zi = S(1) / (S(1) + (-zi).exp());
    zf = S(1) / (S(1) + (-zf).exp());
    zg = zg.tanh();
    zo = S(1) / (S(1) + (-zo).exp());
    c.row(t).array() = zf * c_prev.row(t).array() + zi * zg;
    tanh_c.row(t).array() = c.row(t).array().tanh();
    h.row(t).array() = zo * tanh_c.row(t).array();
    if (!all_finite(h.row(t)) || !all_finite(c.row(t))) fault("lstm");

    // heads
    PolicyOut out;
    const RowVec<S> logits =
        h.row(t) * cmat(params, TensorId::PolicyW).transpose() + crow(params, TensorId::PolicyB);
    for (std::size_t k = 0; k < kNumActions; ++k)
      out.logits[k] = static_cast<double>(logits(static_cast<Eigen::Index>(k)));
    const S v = h.row(t).dot(cmat(params, TensorId::ValueW).row(0)) +
                params.tensor(TensorId::ValueB)[0];
    out.value = static_cast<double>(v);
    for (double l : out.logits)
      if (!std::isfinite(l)) fault("policy");
    if (!std::isfinite(out.value)) fault("value");
    softmax(out.logits, out.probs);

    outputs[static_cast<std::size_t>(t)] = out;
    size = t + 1;
    return out;
  }

  // Backward from per-step head gradients. Either output may be null.
  void backward(const NetParams<S>& params, const Mat<S>& dlogits, const RowVec<S>& dvalue,
                NetParams<S>* grads, std::vector<S>* input_grad) const {
    const int T = size;
    const auto& a = arch;
    const int c1n = a.conv1_channels;
    const int c2n = a.conv2_channels;

    if (grads) grads->set_zero();

    const auto H = h.topRows(T);
    if (grads) {
      mmat(*grads, TensorId::PolicyW).noalias() += dlogits.transpose() * H;
      mrow(*grads, TensorId::PolicyB) += dlogits.colwise().sum();
      mmat(*grads, TensorId::ValueW).noalias() += dvalue * H;
      grads->tensor(TensorId::ValueB)[0] += dvalue.sum();
    }
    Mat<S> dh_heads = dlogits * cmat(params, TensorId::PolicyW);
    dh_heads.noalias() += dvalue.transpose() * cmat(params, TensorId::ValueW);

    // Through time. The window's initial state is a constant.
    const auto Wl = cmat(params, TensorId::LstmW);
    Mat<S> dz(T, 4 * L);
    RowVec<S> dh_next = RowVec<S>::Zero(L);
    RowVec<S> dc_next = RowVec<S>::Zero(L);
    for (int t = T - 1; t >= 0; --t) {
      const auto g = gates.row(t).array();
      const auto gi = g.segment(0, L);
      const auto gf = g.segment(L, L);
      const auto gg = g.segment(2 * L, L);
      const auto go = g.segment(3 * L, L);
      const auto tc = tanh_c.row(t).array();
      const RowVec<S> dh = dh_heads.row(t) + dh_next;
      const auto dha = dh.array();
      const RowVec<S> dc = (dha * go * (S(1) - tc * tc) + dc_next.array()).matrix();
      const auto dca = dc.array();
      auto row = dz.row(t).array();
      row.segment(0, L) = dca * gg * gi * (S(1) - gi);
      row.segment(L, L) = dca * c_prev.row(t).array() * gf * (S(1) - gf);
      row.segment(2 * L, L) = dca * gi * (S(1) - gg * gg);
      row.segment(3 * L, L) = dha * tc * go * (S(1) - go);
      dc_next = (dca * gf).matrix();
      dh_next.noalias() = dz.row(t) * Wl.rightCols(L);
    }
    if (grads) {
      mmat(*grads, TensorId::LstmW).noalias() += dz.transpose() * xh.topRows(T);
      mrow(*grads, TensorId::LstmB) += dz.colwise().sum();
    }
    Mat<S> dfc = dz * Wl.leftCols(F);
    dfc.array() *= (xh.topRows(T).leftCols(F).array() > S(0)).template cast<S>();

    const Eigen::Index flat = a.flat_size();
    const CMatMap<S> flat_all(conv2.data(), T, flat);
    if (grads) {
      mmat(*grads, TensorId::FcW).noalias() += dfc.transpose() * flat_all;
      mrow(*grads, TensorId::FcB) += dfc.colwise().sum();
    }
    Mat<S> dflat = dfc * cmat(params, TensorId::FcW);
    MatMap<S> dconv2(dflat.data(), static_cast<Eigen::Index>(T) * P2, c2n);
    dconv2.array() *= (conv2.topRows(T * P2).array() > S(0)).template cast<S>();
    if (grads) {
      mmat(*grads, TensorId::Conv2W).noalias() += dconv2.transpose() * patches2.topRows(T * P2);
      mrow(*grads, TensorId::Conv2B) += dconv2.colwise().sum();
    }
    const Mat<S> dpatches2 = dconv2 * cmat(params, TensorId::Conv2W);
    Mat<S> dconv1 = Mat<S>::Zero(static_cast<Eigen::Index>(T) * P1, c1n);
    for (int t = 0; t < T; ++t)
      col2im_add(dpatches2.data() + static_cast<std::ptrdiff_t>(t) * P2 * K2, a.conv1_w(), c1n,
                 a.conv2_kernel, a.conv2_stride, a.conv2_h(), a.conv2_w(),
                 dconv1.data() + static_cast<std::ptrdiff_t>(t) * P1 * c1n);
    dconv1.array() *= (conv1.topRows(T * P1).array() > S(0)).template cast<S>();
    if (grads) {
      mmat(*grads, TensorId::Conv1W).noalias() += dconv1.transpose() * patches1.topRows(T * P1);
      mrow(*grads, TensorId::Conv1B) += dconv1.colwise().sum();
    }
    if (input_grad) {
      const Mat<S> dpatches1 = dconv1 * cmat(params, TensorId::Conv1W);
      input_grad->assign(a.input_size() * static_cast<std::size_t>(T), S(0));
      for (int t = 0; t < T; ++t)
        col2im_add(dpatches1.data() + static_cast<std::ptrdiff_t>(t) * P1 * K1, a.input_w,
                   a.input_c, a.conv1_kernel, a.conv1_stride, a.conv1_h(), a.conv1_w(),
                   input_grad->data() + static_cast<std::ptrdiff_t>(t) * a.input_size());
    }
  }
};

template <typename S>
ForwardTape<S>::ForwardTape(const Architecture& arch, int capacity)
    : impl_(std::make_unique<Impl>(arch, capacity)) {}
template <typename S>
ForwardTape<S>::~ForwardTape() = default;
template <typename S>
ForwardTape<S>::ForwardTape(ForwardTape&&) noexcept = default;
template <typename S>
ForwardTape<S>& ForwardTape<S>::operator=(ForwardTape&&) noexcept = default;

template <typename S>
void ForwardTape<S>::reset(const RecurrentState<S>& initial) {
  const auto L = static_cast<std::size_t>(impl_->L);
  if (initial.h.size() != L || initial.c.size() != L)
    throw UsageError("ForwardTape: recurrent state size mismatch");
  impl_->initial = initial;
  impl_->size = 0;
}

template <typename S>
PolicyOut ForwardTape<S>::step(const NetParams<S>& params, std::span<const float> frame) {
  return impl_->step(params, frame);
}

template <typename S>
int ForwardTape<S>::size() const noexcept {
  return impl_->size;
}
template <typename S>
int ForwardTape<S>::capacity() const noexcept {
  return impl_->capacity;
}
template <typename S>
const RecurrentState<S>& ForwardTape<S>::initial_state() const noexcept {
  return impl_->initial;
}

template <typename S>
RecurrentState<S> ForwardTape<S>::current_state() const {
  if (impl_->size == 0) return impl_->initial;
  const int t = impl_->size - 1;
  RecurrentState<S> out;
  out.h.assign(impl_->h.row(t).data(), impl_->h.row(t).data() + impl_->L);
  out.c.assign(impl_->c.row(t).data(), impl_->c.row(t).data() + impl_->L);
  return out;
}

template <typename S>
const PolicyOut& ForwardTape<S>::output(int t) const {
  if (t < 0 || t >= impl_->size) throw UsageError("ForwardTape: step index out of range");
  return impl_->outputs[static_cast<std::size_t>(t)];
}

template <typename S>
std::pair<PolicyOut, RecurrentState<S>> forward(const NetParams<S>& params,
                                                std::span<const float> frame,
                                                const RecurrentState<S>& rstate) {
  ForwardTape<S> tape(params.arch(), 1);
  tape.reset(rstate);
  PolicyOut out = tape.step(params, frame);
  return {out, tape.current_state()};
}

// --------------------------------------------------------- action helpers

Action sample_action(std::span<const double> probs, std::mt19937_64& rng) {
  if (probs.size() != kNumActions) throw UsageError("sample_action: expected 6 probabilities");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw UsageError("sample_action: invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw UsageError("sample_action: probabilities do not sum to 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < kNumActions; ++k) {
    if (probs[k] > 0.0) last_positive = k;
    cum += probs[k];
    if (u < cum && probs[k] > 0.0) return kAllActions[k];
  }
  return kAllActions[last_positive];
}

Action sample_action(std::span<const double> probs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_action(probs, rng);
}

Action greedy_action(std::span<const double> probs) {
  if (probs.size() != kNumActions) throw UsageError("greedy_action: expected 6 probabilities");
  const auto it = std::max_element(probs.begin(), probs.end());
  return kAllActions[static_cast<std::size_t>(it - probs.begin())];
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(std::max(p, 1e-12));
  return h;
}

// ------------------------------------------------------------------ loss

template <typename S>
LossDiagnostics loss_and_grads(const NetParams<S>& params, const ForwardTape<S>& tape,
                               std::span<const Action> actions, std::span<const double> returns,
                               double beta, NetParams<S>& grads) {
  const int T = tape.size();
  if (T == 0) throw UsageError("loss_and_grads: empty window");
  if (actions.size() != static_cast<std::size_t>(T) || returns.size() != static_cast<std::size_t>(T))
    throw UsageError("loss_and_grads: actions/returns not aligned with the window");
  if (!(grads.arch() == params.arch())) grads = NetParams<S>(params.arch());

  LossDiagnostics diag;
  Mat<S> dlogits(T, static_cast<Eigen::Index>(kNumActions));
  RowVec<S> dvalue(T);
  for (int t = 0; t < T; ++t) {
    const PolicyOut& out = tape.output(t);
    const auto logp = log_softmax(out.logits);
    double h = 0.0;
    for (std::size_t k = 0; k < kNumActions; ++k) h -= out.probs[k] * logp[k];
    const double adv = returns[static_cast<std::size_t>(t)] - out.value;
    const std::size_t a = action_index(actions[static_cast<std::size_t>(t)]);
    diag.policy_loss += -adv * logp[a];
    diag.value_loss += 0.5 * adv * adv;
    diag.entropy += h;
    for (std::size_t k = 0; k < kNumActions; ++k) {
      const double onehot = k == a ? 1.0 : 0.0;
      const double g = -adv * (onehot - out.probs[k]) + beta * out.probs[k] * (logp[k] + h);
      dlogits(t, static_cast<Eigen::Index>(k)) = static_cast<S>(g);
    }
    dvalue(t) = static_cast<S>(-adv);
  }
  diag.entropy_loss = -beta * diag.entropy;
  diag.entropy /= T;

  tape.impl().backward(params, dlogits, dvalue, &grads, nullptr);

  double sq = 0.0;
  for (int id = 0; id < kTensorCount; ++id) {
    const auto g = grads.tensor(static_cast<TensorId>(id));
    double s = 0.0;
    for (S v : g) s += static_cast<double>(v) * static_cast<double>(v);
    if (!std::isfinite(s))
      throw NumericFault(std::string(grads.info(static_cast<TensorId>(id)).name),
                         "non-finite gradient");
    sq += s;
  }
  diag.grad_norm = std::sqrt(sq);
  return diag;
}

template <typename S>
void Rollout<S>::validate(int max_length) const {
  const std::size_t n = frames.size();
  if (actions.size() != n || rewards.size() != n || values.size() != n)
    throw UsageError("rollout: frames, actions, rewards and values must be aligned");
  if (n > static_cast<std::size_t>(max_length)) throw UsageError("rollout: longer than window");
  if (terminal && bootstrap_value != 0.0)
    throw UsageError("rollout: terminal rollout must bootstrap from 0");
}

template <typename S>
LossDiagnostics loss_and_grads(const NetParams<S>& params, const Rollout<S>& rollout,
                               std::span<const double> returns, double beta,
                               NetParams<S>& grads) {
  rollout.validate(static_cast<int>(rollout.frames.size()));
  if (rollout.frames.empty()) throw UsageError("loss_and_grads: empty rollout");
  ForwardTape<S> tape(params.arch(), static_cast<int>(rollout.frames.size()));
  tape.reset(rollout.initial_recurrent);
  for (const auto& f : rollout.frames) tape.step(params, f);
  return loss_and_grads(params, tape, rollout.actions, returns, beta, grads);
}

template <typename S>
std::vector<S> logit_input_gradient(const NetParams<S>& params, std::span<const float> frame,
                                    const RecurrentState<S>& rstate, Action action) {
  ForwardTape<S> tape(params.arch(), 1);
  tape.reset(rstate);
  tape.step(params, frame);
  Mat<S> dlogits = Mat<S>::Zero(1, static_cast<Eigen::Index>(kNumActions));
  dlogits(0, static_cast<Eigen::Index>(action_index(action))) = S(1);
  const RowVec<S> dvalue = RowVec<S>::Zero(1);
  std::vector<S> out;
  tape.impl().backward(params, dlogits, dvalue, nullptr, &out);
  return out;
}

#define ATG_INSTANTIATE(S)                                                                       \
  template class NetParams<S>;                                                                   \
  template class ForwardTape<S>;                                                                 \
  template struct Rollout<S>;                                                                    \
  template NetParams<S> init_params<S>(const Architecture&, std::uint64_t);                     \
  template std::pair<PolicyOut, RecurrentState<S>> forward<S>(                                   \
      const NetParams<S>&, std::span<const float>, const RecurrentState<S>&);                   \
  template LossDiagnostics loss_and_grads<S>(const NetParams<S>&, const ForwardTape<S>&,         \
                                             std::span<const Action>, std::span<const double>,   \
                                             double, NetParams<S>&);                             \
  template LossDiagnostics loss_and_grads<S>(const NetParams<S>&, const Rollout<S>&,             \
                                             std::span<const double>, double, NetParams<S>&);    \
  template std::vector<S> logit_input_gradient<S>(const NetParams<S>&, std::span<const float>,   \
                                                  const RecurrentState<S>&, Action);

ATG_INSTANTIATE(float)
ATG_INSTANTIATE(double)

#undef ATG_INSTANTIATE

}  // namespace atg
