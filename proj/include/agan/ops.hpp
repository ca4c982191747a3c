#pragma once

#include "agan/tensor.hpp"

#include <array>
#include <span>
#include <string_view>

namespace agan {

// Differentiable operation catalog. Every function records a node on the active tape when
// any operand requires a gradient, and rejects non-finite operands.
//
// Shape rules:
//   add/sub/mul      identical shapes, or one operand with a single element (scalar broadcast)
//   unary ops        output shape = input shape
//   sum/mean         any shape -> {1}
//   conv2d           x {N,C,H,W} or {C,H,W}; weight {Co,C,kh,kw}; bias {Co} or undefined
//   nearest_upsample x {..,H,W} -> {..,2H,2W}
//   instance_norm    x {N,C,H,W} or {C,H,W}; gamma/beta {C}, both or neither
//   concat           equal shapes except along `axis`
//   slice            [begin, end) along `axis`

enum class OpKind {
  add,
  sub,
  mul,
  scale,
  abs,
  square,
  mean,
  sum,
  relu,
  leaky_relu,
  sigmoid,
  tanh,
  conv2d,
  nearest_upsample,
  instance_norm,
  concat,
  slice,
};

inline constexpr std::array<OpKind, 17> kAllOps = {
    OpKind::add,     OpKind::sub,          OpKind::mul,         OpKind::scale,    OpKind::abs,
    OpKind::square,  OpKind::mean,         OpKind::sum,         OpKind::relu,     OpKind::leaky_relu,
    OpKind::sigmoid, OpKind::tanh,         OpKind::conv2d,      OpKind::nearest_upsample,
    OpKind::instance_norm, OpKind::concat, OpKind::slice,
};

std::string_view op_name(OpKind kind);

enum class PadMode { zero, reflect };

struct Conv2dOptions {
  Index stride = 1;
  Index pad_top = 0;
  Index pad_left = 0;
  Index pad_bottom = 0;
  Index pad_right = 0;
  PadMode mode = PadMode::zero;

  static Conv2dOptions padded(Index pad, PadMode mode, Index stride = 1) {
    return Conv2dOptions{stride, pad, pad, pad, pad, mode};
  }
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInstanceNormEps = 1e-5;

template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);

/// |x|; the subgradient at exactly 0 is 0.
template <typename Scalar> Tensor<Scalar> abs(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> square(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);

/// max(x, 0); the derivative at exactly 0 is 0.
template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope = Scalar(kLeakySlope));
template <typename Scalar> Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> tanh(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      const Conv2dOptions& options);
template <typename Scalar> Tensor<Scalar> nearest_upsample(const Tensor<Scalar>& x);
/// Normalizes every (sample, channel) plane to zero mean and unit (biased) variance,
/// then applies the per-channel affine pair when given.
template <typename Scalar>
Tensor<Scalar> instance_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                             Scalar eps = Scalar(kInstanceNormEps));
template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis);
template <typename Scalar>
Tensor<Scalar> concat(std::initializer_list<Tensor<Scalar>> parts, Index axis) {
  return concat(std::span<const Tensor<Scalar>>(parts.begin(), parts.size()), axis);
}
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index begin, Index end);

/// Throws unless every element is finite; `op` names the caller in the message.
template <typename Scalar> void require_finite(std::string_view op, const Tensor<Scalar>& x);

}  // namespace agan
