#include "agan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>

namespace agan {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::abs: return "abs";
    case OpKind::square: return "square";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::conv2d: return "conv2d";
    case OpKind::nearest_upsample: return "nearest_upsample";
    case OpKind::instance_norm: return "instance_norm";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
  }
  return "unknown";
}

template <typename Scalar>
void require_finite(std::string_view op, const Tensor<Scalar>& x) {
  if (!x.data().allFinite()) {
    throw TensorError(std::string(op) + ": non-finite operand of shape " + shape_string(x.shape()));
  }
}

namespace {

template <typename Scalar>
using StoragePtr = std::shared_ptr<TensorStorage<Scalar>>;
template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
Tape<Scalar>* recording_tape(std::initializer_list<const Tensor<Scalar>*> operands) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<Scalar>* t : operands) {
    if (t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename Scalar>
void accumulate(const StoragePtr<Scalar>& s, const auto& delta) {
  Tape<Scalar>::accumulate(s, delta);
}

template <typename Scalar>
Tensor<Scalar> unary(const char* op, const Tensor<Scalar>& x, Buffer<Scalar> out,
                     std::function<void(const Buffer<Scalar>&, const StoragePtr<Scalar>&)> grad_rule) {
  auto result = Tensor<Scalar>::from_buffer(x.shape(), std::move(out));
  if (auto* tape = recording_tape<Scalar>({&x})) {
    auto xs = x.handle();
    tape->record(op, {xs}, result.handle(),
                 [xs, rule = std::move(grad_rule)](const Buffer<Scalar>& g) { rule(g, xs); });
  }
  return result;
}

enum class Broadcast { none, left_scalar, right_scalar };

template <typename Scalar>
Broadcast broadcast_rule(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.numel() == 1) return Broadcast::right_scalar;
  if (a.numel() == 1) return Broadcast::left_scalar;
  throw TensorError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
}

// Expands a single-element operand to the full extent.
template <typename Scalar>
Buffer<Scalar> expanded(const Tensor<Scalar>& t, Index n) {
  if (t.numel() == n) return t.data();
  return Buffer<Scalar>::Constant(n, t.data()[0]);
}

// Reduces a gradient to the operand's extent (sums over a broadcast).
template <typename Scalar>
void accumulate_reduced(const StoragePtr<Scalar>& s, const Buffer<Scalar>& g) {
  if (s->data.size() == g.size()) {
    accumulate<Scalar>(s, g);
  } else {
    accumulate<Scalar>(s, Buffer<Scalar>::Constant(1, g.sum()));
  }
}

template <typename Scalar>
Tensor<Scalar> binary(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b, int kind) {
  require_finite(op, a);
  require_finite(op, b);
  Broadcast rule = broadcast_rule(op, a, b);
  const Shape& shape = rule == Broadcast::left_scalar ? b.shape() : a.shape();
  const Index n = shape_numel(shape);
  Buffer<Scalar> lhs = expanded(a, n);
  Buffer<Scalar> rhs = expanded(b, n);
  Buffer<Scalar> out;
  switch (kind) {
    case 0: out = lhs + rhs; break;
    case 1: out = lhs - rhs; break;
    default: out = lhs * rhs; break;
  }
  auto result = Tensor<Scalar>::from_buffer(shape, std::move(out));
  if (auto* tape = recording_tape<Scalar>({&a, &b})) {
    auto as = a.handle();
    auto bs = b.handle();
    tape->record(op, {as, bs}, result.handle(),
                 [as, bs, kind, lhs = std::move(lhs), rhs = std::move(rhs)](const Buffer<Scalar>& g) {
                   switch (kind) {
                     case 0:
                       if (as->requires_grad) accumulate_reduced<Scalar>(as, g);
                       if (bs->requires_grad) accumulate_reduced<Scalar>(bs, g);
                       break;
                     case 1:
                       if (as->requires_grad) accumulate_reduced<Scalar>(as, g);
                       if (bs->requires_grad) accumulate_reduced<Scalar>(bs, Buffer<Scalar>(-g));
                       break;
                     default:
                       if (as->requires_grad) accumulate_reduced<Scalar>(as, Buffer<Scalar>(g * rhs));
                       if (bs->requires_grad) accumulate_reduced<Scalar>(bs, Buffer<Scalar>(g * lhs));
                       break;
                   }
                 });
  }
  return result;
}

// Image-like operands are {C,H,W} (a single sample) or {N,C,H,W}.
struct Planes {
  Index batch, channels, height, width;
};

template <typename Scalar>
Planes image_planes(const char* op, const Tensor<Scalar>& x) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw TensorError(std::string(op) + ": expected a {C,H,W} or {N,C,H,W} operand, got " +
                    shape_string(x.shape()));
}

Shape image_shape(Index rank, const Planes& p) {
  if (rank == 3) return {p.channels, p.height, p.width};
  return {p.batch, p.channels, p.height, p.width};
}

Index reflect_index(Index i, Index n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary("add", a, b, 0);
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary("sub", a, b, 1);
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary("mul", a, b, 2);
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  require_finite("scale", x);
  return unary<Scalar>("scale", x, x.data() * factor, [factor](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
    accumulate<Scalar>(s, g * factor);
  });
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& x) {
  require_finite("abs", x);
  return unary<Scalar>("abs", x, x.data().abs(), [](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
    accumulate<Scalar>(s, g * s->data.sign());
  });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
  require_finite("square", x);
  return unary<Scalar>("square", x, x.data().square(), [](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
    accumulate<Scalar>(s, g * s->data * Scalar(2));
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  require_finite("sum", x);
  auto result = Tensor<Scalar>::scalar(x.data().sum());
  if (auto* tape = recording_tape<Scalar>({&x})) {
    auto xs = x.handle();
    tape->record("sum", {xs}, result.handle(), [xs](const Buffer<Scalar>& g) {
      accumulate<Scalar>(xs, Buffer<Scalar>::Constant(xs->data.size(), g[0]));
    });
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  require_finite("mean", x);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(x.numel());
  auto result = Tensor<Scalar>::scalar(x.data().sum() * inv_n);
  if (auto* tape = recording_tape<Scalar>({&x})) {
    auto xs = x.handle();
    tape->record("mean", {xs}, result.handle(), [xs, inv_n](const Buffer<Scalar>& g) {
      accumulate<Scalar>(xs, Buffer<Scalar>::Constant(xs->data.size(), g[0] * inv_n));
    });
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  require_finite("relu", x);
  return unary<Scalar>("relu", x, x.data().max(Scalar(0)), [](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
    accumulate<Scalar>(s, (s->data > Scalar(0)).select(g, Scalar(0)));
  });
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  require_finite("leaky_relu", x);
  Buffer<Scalar> out = (x.data() > Scalar(0)).select(x.data(), x.data() * slope);
  return unary<Scalar>("leaky_relu", x, std::move(out), [slope](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
    accumulate<Scalar>(s, (s->data > Scalar(0)).select(g, g * slope));
  });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  require_finite("sigmoid", x);
  Buffer<Scalar> out = (Scalar(1) + (-x.data()).exp()).inverse();
  Buffer<Scalar> saved = out;
  return unary<Scalar>("sigmoid", x, std::move(out),
                       [y = std::move(saved)](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
                         accumulate<Scalar>(s, g * y * (Scalar(1) - y));
                       });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  require_finite("tanh", x);
  Buffer<Scalar> out = x.data().tanh();
  Buffer<Scalar> saved = out;
  return unary<Scalar>("tanh", x, std::move(out),
                       [y = std::move(saved)](const Buffer<Scalar>& g, const StoragePtr<Scalar>& s) {
                         accumulate<Scalar>(s, g * (Scalar(1) - y.square()));
                       });
}

namespace {

struct PadGeometry {
  Index height, width, pad_top, pad_left, pad_bottom, pad_right, reflect;
  auto operator<=>(const PadGeometry&) const = default;
};

// For every position of one padded plane, the source offset in the unpadded plane or -1
// for zero padding. Built once per geometry and thread.
std::shared_ptr<const std::vector<std::int32_t>> pad_table(const PadGeometry& g) {
  thread_local std::map<PadGeometry, std::shared_ptr<const std::vector<std::int32_t>>> cache;
  if (auto it = cache.find(g); it != cache.end()) return it->second;
  const Index hp = g.height + g.pad_top + g.pad_bottom, wp = g.width + g.pad_left + g.pad_right;
  auto table = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(hp * wp));
  for (Index y = 0; y < hp; ++y) {
    for (Index x = 0; x < wp; ++x) {
      Index iy = y - g.pad_top, ix = x - g.pad_left;
      bool pad = iy < 0 || iy >= g.height || ix < 0 || ix >= g.width;
      if (g.reflect) {
        iy = reflect_index(iy, g.height);
        ix = reflect_index(ix, g.width);
        pad = false;
      }
      (*table)[static_cast<std::size_t>(y * wp + x)] = pad ? -1 : static_cast<std::int32_t>(iy * g.width + ix);
    }
  }
  cache.emplace(g, table);
  return table;
}

// Patch matrix (C*kh*kw rows, ho*wo columns) from one padded sample.
template <typename Scalar>
void im2col(const Scalar* padded, Index channels, Index hp, Index wp, Index kh, Index kw, Index stride, Index ho,
            Index wo, Scalar* col) {
  for (Index c = 0; c < channels; ++c)
    for (Index i = 0; i < kh; ++i)
      for (Index j = 0; j < kw; ++j) {
        const Scalar* src = padded + c * hp * wp + i * wp + j;
        for (Index oy = 0; oy < ho; ++oy) {
          const Scalar* row = src + oy * stride * wp;
          if (stride == 1) {
            std::copy(row, row + wo, col);
          } else {
            for (Index ox = 0; ox < wo; ++ox) col[ox] = row[ox * stride];
          }
          col += wo;
        }
      }
}

// Adjoint of im2col: adds every patch entry back into the padded sample.
template <typename Scalar>
void col2im(const Scalar* col, Index channels, Index hp, Index wp, Index kh, Index kw, Index stride, Index ho,
            Index wo, Scalar* padded) {
  for (Index c = 0; c < channels; ++c)
    for (Index i = 0; i < kh; ++i)
      for (Index j = 0; j < kw; ++j) {
        Scalar* dst = padded + c * hp * wp + i * wp + j;
        for (Index oy = 0; oy < ho; ++oy) {
          Scalar* row = dst + oy * stride * wp;
          if (stride == 1) {
            for (Index ox = 0; ox < wo; ++ox) row[ox] += col[ox];
          } else {
            for (Index ox = 0; ox < wo; ++ox) row[ox * stride] += col[ox];
          }
          col += wo;
        }
      }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      const Conv2dOptions& opt) {
  require_finite("conv2d", x);
  require_finite("conv2d", weight);
  const Planes in = image_planes("conv2d", x);
  if (weight.rank() != 4 || weight.dim(1) != in.channels) {
    throw TensorError("conv2d: weight shape " + shape_string(weight.shape()) + " incompatible with input " +
                      shape_string(x.shape()));
  }
  const Index cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (bias.defined()) {
    require_finite("conv2d", bias);
    if (bias.rank() != 1 || bias.dim(0) != cout) {
      throw TensorError("conv2d: bias shape " + shape_string(bias.shape()) + " incompatible with weight " +
                        shape_string(weight.shape()));
    }
  }
  if (opt.stride < 1) throw TensorError("conv2d: stride must be positive");
  if (std::min({opt.pad_top, opt.pad_left, opt.pad_bottom, opt.pad_right}) < 0) {
    throw TensorError("conv2d: padding must be non-negative");
  }
  if (opt.mode == PadMode::reflect &&
      (std::max(opt.pad_top, opt.pad_bottom) >= in.height || std::max(opt.pad_left, opt.pad_right) >= in.width)) {
    throw TensorError("conv2d: reflection padding must be smaller than the input extent " + shape_string(x.shape()));
  }
  const Index hp = in.height + opt.pad_top + opt.pad_bottom;
  const Index wp = in.width + opt.pad_left + opt.pad_right;
  if (hp < kh || wp < kw) {
    throw TensorError("conv2d: kernel " + shape_string(weight.shape()) + " larger than padded input " +
                      shape_string(x.shape()));
  }
  const Index ho = (hp - kh) / opt.stride + 1;
  const Index wo = (wp - kw) / opt.stride + 1;
  const Index k = in.channels * kh * kw;
  const Index p = ho * wo;
  const Index plane = in.height * in.width;
  const Index sample = in.channels * plane;
  const auto table = pad_table({in.height, in.width, opt.pad_top, opt.pad_left, opt.pad_bottom, opt.pad_right,
                                opt.mode == PadMode::reflect ? 1 : 0});
  const Index padded_plane = hp * wp;

  const Eigen::Map<const MatRM<Scalar>> wmat(weight.data().data(), cout, k);
  auto patches = std::make_shared<std::vector<MatRM<Scalar>>>(static_cast<std::size_t>(in.batch));
  Buffer<Scalar> out(in.batch * cout * p);
  std::vector<Scalar> padded(static_cast<std::size_t>(in.channels * padded_plane));
  for (Index n = 0; n < in.batch; ++n) {
    const Scalar* src = x.data().data() + n * sample;
    for (Index c = 0; c < in.channels; ++c) {
      const Scalar* sp = src + c * plane;
      Scalar* dp = padded.data() + c * padded_plane;
      for (Index e = 0; e < padded_plane; ++e) {
        const std::int32_t s = (*table)[static_cast<std::size_t>(e)];
        dp[e] = s < 0 ? Scalar(0) : sp[s];
      }
    }
    MatRM<Scalar>& col = (*patches)[static_cast<std::size_t>(n)];
    col.resize(k, p);
    im2col(padded.data(), in.channels, hp, wp, kh, kw, opt.stride, ho, wo, col.data());
    Eigen::Map<MatRM<Scalar>> o(out.data() + n * cout * p, cout, p);
    o.noalias() = wmat * col;
    if (bias.defined()) o.colwise() += bias.data().matrix();
  }

  Planes out_planes{in.batch, cout, ho, wo};
  auto result = Tensor<Scalar>::from_buffer(image_shape(x.rank(), out_planes), std::move(out));
  if (auto* tape = recording_tape<Scalar>({&x, &weight, &bias})) {
    auto xs = x.handle();
    auto ws = weight.handle();
    auto bs = bias.defined() ? bias.handle() : nullptr;
    std::vector<StoragePtr<Scalar>> operands{xs, ws};
    if (bs) operands.push_back(bs);
    const Index stride = opt.stride;
    tape->record("conv2d", std::move(operands), result.handle(),
                 [=](const Buffer<Scalar>& g) {
                   const Eigen::Map<const MatRM<Scalar>> wm(ws->data.data(), cout, k);
                   MatRM<Scalar> grad_w = MatRM<Scalar>::Zero(cout, k);
                   Buffer<Scalar> grad_b = Buffer<Scalar>::Zero(cout);
                   Buffer<Scalar> grad_x;
                   std::vector<Scalar> gpad;
                   MatRM<Scalar> gcol;
                   if (xs->requires_grad) grad_x.setZero(xs->data.size());
                   for (Index n = 0; n < in.batch; ++n) {
                     const Eigen::Map<const MatRM<Scalar>> go(g.data() + n * cout * p, cout, p);
                     const MatRM<Scalar>& col = (*patches)[static_cast<std::size_t>(n)];
                     if (ws->requires_grad) grad_w.noalias() += go * col.transpose();
                     if (bs && bs->requires_grad) grad_b += go.rowwise().sum().array();
                     if (xs->requires_grad) {
                       gcol.noalias() = wm.transpose() * go;
                       gpad.assign(static_cast<std::size_t>(in.channels * padded_plane), Scalar(0));
                       col2im(gcol.data(), in.channels, hp, wp, kh, kw, stride, ho, wo, gpad.data());
                       Scalar* dst = grad_x.data() + n * sample;
                       for (Index c = 0; c < in.channels; ++c) {
                         const Scalar* gp = gpad.data() + c * padded_plane;
                         Scalar* dp = dst + c * plane;
                         for (Index e = 0; e < padded_plane; ++e) {
                           const std::int32_t s = (*table)[static_cast<std::size_t>(e)];
                           if (s >= 0) dp[s] += gp[e];
                         }
                       }
                     }
                   }
                   if (ws->requires_grad) {
                     accumulate<Scalar>(ws, Eigen::Map<const Buffer<Scalar>>(grad_w.data(), cout * k));
                   }
                   if (bs && bs->requires_grad) accumulate<Scalar>(bs, grad_b);
                   if (xs->requires_grad) accumulate<Scalar>(xs, grad_x);
                 });
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> nearest_upsample(const Tensor<Scalar>& x) {
  require_finite("nearest_upsample", x);
  if (x.rank() < 2) {
    throw TensorError("nearest_upsample: expected at least 2 dimensions, got " + shape_string(x.shape()));
  }
  const Index h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const Index planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = 2 * h;
  shape[shape.size() - 1] = 2 * w;
  Buffer<Scalar> out(x.numel() * 4);
  const Scalar* src = x.data().data();
  for (Index pl = 0; pl < planes; ++pl) {
    for (Index y = 0; y < 2 * h; ++y) {
      for (Index xx = 0; xx < 2 * w; ++xx) {
        out[(pl * 2 * h + y) * 2 * w + xx] = src[(pl * h + y / 2) * w + xx / 2];
      }
    }
  }
  auto result = Tensor<Scalar>::from_buffer(shape, std::move(out));
  if (auto* tape = recording_tape<Scalar>({&x})) {
    auto xs = x.handle();
    tape->record("nearest_upsample", {xs}, result.handle(), [xs, planes, h, w](const Buffer<Scalar>& g) {
      Buffer<Scalar> gx = Buffer<Scalar>::Zero(planes * h * w);
      for (Index pl = 0; pl < planes; ++pl) {
        for (Index y = 0; y < 2 * h; ++y) {
          for (Index xx = 0; xx < 2 * w; ++xx) {
            gx[(pl * h + y / 2) * w + xx / 2] += g[(pl * 2 * h + y) * 2 * w + xx];
          }
        }
      }
      accumulate<Scalar>(xs, gx);
    });
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> instance_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                             Scalar eps) {
  require_finite("instance_norm", x);
  const Planes in = image_planes("instance_norm", x);
  if (gamma.defined() != beta.defined()) {
    throw TensorError("instance_norm: gamma and beta must be given together");
  }
  const bool affine = gamma.defined();
  if (affine) {
    require_finite("instance_norm", gamma);
    require_finite("instance_norm", beta);
    const Shape expected{in.channels};
    if (gamma.shape() != expected || beta.shape() != expected) {
      throw TensorError("instance_norm: affine shapes " + shape_string(gamma.shape()) + " / " +
                        shape_string(beta.shape()) + " do not match channels of " + shape_string(x.shape()));
    }
  }
  const Index plane = in.height * in.width;
  const Index planes = in.batch * in.channels;
  Buffer<Scalar> normalized(x.numel());
  Buffer<Scalar> inv_std(planes);
  Buffer<Scalar> out(x.numel());
  for (Index pl = 0; pl < planes; ++pl) {
    const auto seg = x.data().segment(pl * plane, plane);
    const Scalar mu = seg.mean();
    const Scalar var = (seg - mu).square().mean();
    inv_std[pl] = Scalar(1) / std::sqrt(var + eps);
    normalized.segment(pl * plane, plane) = (seg - mu) * inv_std[pl];
    const Index c = pl % in.channels;
    if (affine) {
      out.segment(pl * plane, plane) = normalized.segment(pl * plane, plane) * gamma.data()[c] + beta.data()[c];
    } else {
      out.segment(pl * plane, plane) = normalized.segment(pl * plane, plane);
    }
  }
  auto result = Tensor<Scalar>::from_buffer(x.shape(), std::move(out));
  if (auto* tape = recording_tape<Scalar>({&x, &gamma, &beta})) {
    auto xs = x.handle();
    auto gs = affine ? gamma.handle() : nullptr;
    auto bs = affine ? beta.handle() : nullptr;
    std::vector<StoragePtr<Scalar>> operands{xs};
    if (affine) {
      operands.push_back(gs);
      operands.push_back(bs);
    }
    tape->record("instance_norm", std::move(operands), result.handle(),
                 [=, xhat = std::move(normalized), inv_std = std::move(inv_std)](const Buffer<Scalar>& g) {
                   const Index channels = in.channels;
                   Buffer<Scalar> gx;
                   if (xs->requires_grad) gx.resize(xs->data.size());
                   Buffer<Scalar> ggamma = Buffer<Scalar>::Zero(channels);
                   Buffer<Scalar> gbeta = Buffer<Scalar>::Zero(channels);
                   for (Index pl = 0; pl < planes; ++pl) {
                     const Index c = pl % channels;
                     const auto go = g.segment(pl * plane, plane);
                     const auto xh = xhat.segment(pl * plane, plane);
                     if (affine) {
                       ggamma[c] += (go * xh).sum();
                       gbeta[c] += go.sum();
                     }
                     if (xs->requires_grad) {
                       const Scalar scale_c = affine ? gs->data[c] : Scalar(1);
                       const Buffer<Scalar> gxh = go * scale_c;
                       gx.segment(pl * plane, plane) =
                           inv_std[pl] * (gxh - gxh.mean() - xh * (gxh * xh).mean());
                     }
                   }
                   if (xs->requires_grad) accumulate<Scalar>(xs, gx);
                   if (affine) {
                     accumulate<Scalar>(gs, ggamma);
                     accumulate<Scalar>(bs, gbeta);
                   }
                 });
  }
  return result;
}

namespace {

// (outer, inner) split of a shape around `axis`; inner includes the axis extent.
std::pair<Index, Index> split_at(const Shape& shape, Index axis) {
  Index outer = 1, inner = 1;
  for (Index i = 0; i < static_cast<Index>(shape.size()); ++i) {
    if (i < axis) outer *= shape[static_cast<std::size_t>(i)];
    else inner *= shape[static_cast<std::size_t>(i)];
  }
  return {outer, inner};
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw TensorError("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis < 0 || axis >= static_cast<Index>(first.size())) {
    throw TensorError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  }
  Shape shape = first;
  shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& t : parts) {
    require_finite("concat", t);
    Shape a = t.shape(), b = first;
    if (a.size() != b.size()) {
      throw TensorError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(t.shape()));
    }
    a[static_cast<std::size_t>(axis)] = b[static_cast<std::size_t>(axis)] = 0;
    if (a != b) throw TensorError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(t.shape()));
    shape[static_cast<std::size_t>(axis)] += t.dim(axis);
  }
  const Index outer = split_at(first, axis).first;
  std::vector<Index> inner;
  Index total_inner = 0;
  for (const auto& t : parts) {
    inner.push_back(split_at(t.shape(), axis).second);
    total_inner += inner.back();
  }
  Buffer<Scalar> out(outer * total_inner);
  for (Index o = 0; o < outer; ++o) {
    Index offset = o * total_inner;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      out.segment(offset, inner[i]) = parts[i].data().segment(o * inner[i], inner[i]);
      offset += inner[i];
    }
  }
  auto result = Tensor<Scalar>::from_buffer(shape, std::move(out));
  Tape<Scalar>* tape = Tape<Scalar>::active();
  bool any = false;
  for (const auto& t : parts) any = any || t.requires_grad();
  if (tape != nullptr && any) {
    std::vector<StoragePtr<Scalar>> operands;
    for (const auto& t : parts) operands.push_back(t.handle());
    tape->record("concat", operands, result.handle(), [operands, inner, outer, total_inner](const Buffer<Scalar>& g) {
      Index start = 0;
      for (std::size_t i = 0; i < operands.size(); ++i) {
        if (operands[i]->requires_grad) {
          Buffer<Scalar> gi(outer * inner[i]);
          for (Index o = 0; o < outer; ++o) {
            gi.segment(o * inner[i], inner[i]) = g.segment(o * total_inner + start, inner[i]);
          }
          accumulate<Scalar>(operands[i], gi);
        }
        start += inner[i];
      }
    });
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index begin, Index end) {
  require_finite("slice", x);
  if (axis < 0 || axis >= x.rank() || begin < 0 || end > x.dim(axis) || begin >= end) {
    throw TensorError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                      std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  const auto [outer, inner] = split_at(x.shape(), axis);
  const Index stride = inner / x.dim(axis);
  const Index chunk = (end - begin) * stride;
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = end - begin;
  Buffer<Scalar> out(outer * chunk);
  for (Index o = 0; o < outer; ++o) out.segment(o * chunk, chunk) = x.data().segment(o * inner + begin * stride, chunk);
  auto result = Tensor<Scalar>::from_buffer(shape, std::move(out));
  if (auto* tape = recording_tape<Scalar>({&x})) {
    auto xs = x.handle();
    tape->record("slice", {xs}, result.handle(), [=, outer = outer, inner = inner](const Buffer<Scalar>& g) {
      Buffer<Scalar> gx = Buffer<Scalar>::Zero(xs->data.size());
      for (Index o = 0; o < outer; ++o) gx.segment(o * inner + begin * stride, chunk) = g.segment(o * chunk, chunk);
      accumulate<Scalar>(xs, gx);
    });
  }
  return result;
}

#define AGAN_INSTANTIATE_OPS(S)                                                                          \
  template void require_finite<S>(std::string_view, const Tensor<S>&);                                  \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> scale<S>(const Tensor<S>&, S);                                                     \
  template Tensor<S> abs<S>(const Tensor<S>&);                                                          \
  template Tensor<S> square<S>(const Tensor<S>&);                                                       \
  template Tensor<S> sum<S>(const Tensor<S>&);                                                          \
  template Tensor<S> mean<S>(const Tensor<S>&);                                                         \
  template Tensor<S> relu<S>(const Tensor<S>&);                                                         \
  template Tensor<S> leaky_relu<S>(const Tensor<S>&, S);                                                \
  template Tensor<S> sigmoid<S>(const Tensor<S>&);                                                      \
  template Tensor<S> tanh<S>(const Tensor<S>&);                                                         \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&); \
  template Tensor<S> nearest_upsample<S>(const Tensor<S>&);                                             \
  template Tensor<S> instance_norm<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);         \
  template Tensor<S> concat<S>(std::span<const Tensor<S>>, Index);                                      \
  template Tensor<S> slice<S>(const Tensor<S>&, Index, Index, Index);

AGAN_INSTANTIATE_OPS(float)
AGAN_INSTANTIATE_OPS(double)

}  // namespace agan
