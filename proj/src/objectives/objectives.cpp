#include "agan/objectives.hpp"

#include <cmath>
#include <cstdio>

namespace agan {

std::string_view mode_name(TrainMode mode) {
  return mode == TrainMode::supervised ? "supervised" : "unsupervised";
}

TrainMode parse_mode(std::string_view text) {
  if (text == "unsupervised") return TrainMode::unsupervised;
  if (text == "supervised") return TrainMode::supervised;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected unsupervised or supervised)");
}

void LossWeights::validate() const {
  for (double w : {lambda_cyc, lambda_a_cyc, lambda_a_sparse, lambda_a_sup}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and non-negative");
  }
}

std::string LossReport::csv_header() {
  return "gan_g_xy,gan_g_yx,gan_d_x,gan_d_y,cyc,a_cyc,a_sparse,a_sup,total_g,total_d";
}

std::string LossReport::csv_row() const {
  auto fmt = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  return fmt(gan_g_xy) + ',' + fmt(gan_g_yx) + ',' + fmt(gan_d_x) + ',' + fmt(gan_d_y) + ',' + fmt(cyc) + ',' +
         opt(a_cyc) + ',' + opt(a_sparse) + ',' + opt(a_sup) + ',' + fmt(total_g) + ',' + fmt(total_d);
}

bool LossReport::all_finite() const {
  bool ok = std::isfinite(gan_g_xy) && std::isfinite(gan_g_yx) && std::isfinite(gan_d_x) && std::isfinite(gan_d_y) &&
            std::isfinite(cyc) && std::isfinite(total_g) && std::isfinite(total_d);
  for (const auto& v : {a_cyc, a_sparse, a_sup}) ok = ok && (!v || std::isfinite(*v));
  return ok;
}

namespace {

template <typename Scalar>
void require_defined(const char* op, const Tensor<Scalar>& t) {
  if (!t.defined()) throw TensorError(std::string(op) + ": empty operand");
}

template <typename Scalar>
void require_same_shape(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

template <typename Scalar>
Tensor<Scalar> mean_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mean(abs(sub(a, b)));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> loss_gan_d(const Tensor<Scalar>& real_scores, const Tensor<Scalar>& fake_scores) {
  require_defined("loss_gan_d", real_scores);
  require_defined("loss_gan_d", fake_scores);
  const auto one = Tensor<Scalar>::scalar(Scalar(1));
  return add(mean(square(sub(real_scores, one))), mean(square(fake_scores)));
}

template <typename Scalar>
Tensor<Scalar> loss_gan_g(const Tensor<Scalar>& fake_scores) {
  require_defined("loss_gan_g", fake_scores);
  return mean(square(sub(fake_scores, Tensor<Scalar>::scalar(Scalar(1)))));
}

template <typename Scalar>
Tensor<Scalar> loss_cycle(const Tensor<Scalar>& x, const Tensor<Scalar>& f_of_g_x, const Tensor<Scalar>& y,
                          const Tensor<Scalar>& g_of_f_y) {
  require_same_shape("loss_cycle", x, f_of_g_x);
  require_same_shape("loss_cycle", y, g_of_f_y);
  return add(mean_abs_diff(f_of_g_x, x), mean_abs_diff(g_of_f_y, y));
}

template <typename Scalar>
Tensor<Scalar> loss_attn_cycle(const Tensor<Scalar>& a_x_of_x, const Tensor<Scalar>& a_y_of_gx,
                               const Tensor<Scalar>& a_y_of_y, const Tensor<Scalar>& a_x_of_fy) {
  require_same_shape("loss_attn_cycle", a_x_of_x, a_y_of_gx);
  require_same_shape("loss_attn_cycle", a_y_of_y, a_x_of_fy);
  return add(mean_abs_diff(a_x_of_x, a_y_of_gx), mean_abs_diff(a_y_of_y, a_x_of_fy));
}

template <typename Scalar>
Tensor<Scalar> loss_attn_sparse(const Tensor<Scalar>& a_x_of_x, const Tensor<Scalar>& a_y_of_y) {
  require_defined("loss_attn_sparse", a_x_of_x);
  require_defined("loss_attn_sparse", a_y_of_y);
  return add(mean(abs(a_x_of_x)), mean(abs(a_y_of_y)));
}

namespace {

template <typename Scalar>
Tensor<Scalar> supervised_domain(std::span<const Tensor<Scalar>> maps, std::span<const Tensor<Scalar>> masks) {
  if (maps.empty() || maps.size() != masks.size()) {
    throw TensorError("loss_attn_supervised: need one mask per attention map and a non-empty batch");
  }
  Tensor<Scalar> total;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require_same_shape("loss_attn_supervised", maps[i], masks[i]);
    const auto& m = masks[i].data();
    const bool binary = ((m.abs() <= Scalar(1e-6)) || ((m - Scalar(1)).abs() <= Scalar(1e-6))).all();
    if (!binary) throw TensorError("loss_attn_supervised: mask values must be 0 or 1");
    auto term = mean_abs_diff(masks[i], maps[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, Scalar(1) / static_cast<Scalar>(maps.size()));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> loss_attn_supervised(std::span<const Tensor<Scalar>> maps_x, std::span<const Tensor<Scalar>> masks_x,
                                    std::span<const Tensor<Scalar>> maps_y, std::span<const Tensor<Scalar>> masks_y) {
  return add(supervised_domain(maps_x, masks_x), supervised_domain(maps_y, masks_y));
}

template <typename Scalar>
GeneratorObjective<Scalar> total_generator_loss(TrainMode mode, const LossWeights& weights,
                                                const GeneratorComponents<Scalar>& c) {
  weights.validate();
  auto need = [](const Tensor<Scalar>& t, const char* name) {
    if (!t.defined()) throw std::invalid_argument(std::string("total_generator_loss: missing component ") + name);
    if (t.numel() != 1) throw std::invalid_argument(std::string("total_generator_loss: non-scalar ") + name);
  };
  auto forbid = [mode](const Tensor<Scalar>& t, const char* name) {
    if (t.defined()) {
      throw std::invalid_argument(std::string("total_generator_loss: ") + name + " is not part of the " +
                                  std::string(mode_name(mode)) + " objective");
    }
  };
  need(c.gan_g_xy, "gan_g_xy");
  need(c.gan_g_yx, "gan_g_yx");
  need(c.cyc, "cyc");

  GeneratorObjective<Scalar> out;
  out.report.gan_g_xy = c.gan_g_xy.item();
  out.report.gan_g_yx = c.gan_g_yx.item();
  out.report.cyc = c.cyc.item();
  Tensor<Scalar> total = add(add(c.gan_g_xy, c.gan_g_yx), scale(c.cyc, static_cast<Scalar>(weights.lambda_cyc)));
  if (mode == TrainMode::unsupervised) {
    need(c.a_cyc, "a_cyc");
    need(c.a_sparse, "a_sparse");
    forbid(c.a_sup, "a_sup");
    total = add(total, scale(c.a_cyc, static_cast<Scalar>(weights.lambda_a_cyc)));
    total = add(total, scale(c.a_sparse, static_cast<Scalar>(weights.lambda_a_sparse)));
    out.report.a_cyc = c.a_cyc.item();
    out.report.a_sparse = c.a_sparse.item();
  } else {
    need(c.a_sup, "a_sup");
    forbid(c.a_cyc, "a_cyc");
    forbid(c.a_sparse, "a_sparse");
    total = add(total, scale(c.a_sup, static_cast<Scalar>(weights.lambda_a_sup)));
    out.report.a_sup = c.a_sup.item();
  }
  out.report.total_g = total.item();
  out.total = std::move(total);
  return out;
}

namespace {

using Inputs = std::vector<Tensor<double>>;

enum class Head { linear, tanh, sigmoid };

// Two 3x3 convolutions with a leaky relu between them; inputs are the parameter leaves.
Tensor<double> two_layer(const Inputs& p, const Tensor<double>& x, Head head) {
  const auto opt = Conv2dOptions::padded(1, PadMode::reflect);
  auto h = leaky_relu(conv2d(x, p[0], p[1], opt));
  auto out = conv2d(h, p[2], p[3], opt);
  switch (head) {
    case Head::tanh: return tanh(out);
    case Head::sigmoid: return sigmoid(out);
    case Head::linear: return out;
  }
  return out;
}

Tensor<double> fixed_input(std::uint64_t seed, Shape shape = {3, 6, 6}) {
  Prng prng(seed);
  return random_tensor(shape, prng, -1.0, 1.0);
}

Tensor<double> fixed_mask(std::uint64_t seed) {
  Prng prng(seed);
  Buffer<double> m(36);
  for (Index i = 0; i < 36; ++i) m[i] = prng.bernoulli(0.4) ? 1.0 : 0.0;
  return Tensor<double>::from_buffer({1, 6, 6}, m);
}

GradcheckCase network_case(std::string name, Index out_channels, std::function<Tensor<double>(const Inputs&)> loss) {
  return GradcheckCase{std::move(name),
                       [out_channels](Prng& prng) {
                         return Inputs{random_tensor({4, 3, 3, 3}, prng, -0.5, 0.5), random_tensor({4}, prng, -0.5, 0.5),
                                       random_tensor({out_channels, 4, 3, 3}, prng, -0.5, 0.5),
                                       random_tensor({out_channels}, prng, -0.5, 0.5)};
                       },
                       std::move(loss)};
}

}  // namespace

std::vector<GradcheckCase> objective_gradcheck_cases() {
  std::vector<GradcheckCase> cases;
  cases.push_back(network_case("loss_gan_d", 1, [](const Inputs& p) {
    return loss_gan_d(two_layer(p, fixed_input(1), Head::linear), two_layer(p, fixed_input(2), Head::linear));
  }));
  cases.push_back(network_case("loss_gan_g", 1, [](const Inputs& p) {
    return loss_gan_g(two_layer(p, fixed_input(3), Head::linear));
  }));
  cases.push_back(network_case("loss_cycle", 3, [](const Inputs& p) {
    const auto x = fixed_input(4), y = fixed_input(5);
    return loss_cycle(x, two_layer(p, x, Head::tanh), y, two_layer(p, y, Head::tanh));
  }));
  cases.push_back(network_case("loss_attn_cycle", 1, [](const Inputs& p) {
    return loss_attn_cycle(two_layer(p, fixed_input(6), Head::sigmoid), fixed_mask(7).clone(),
                           two_layer(p, fixed_input(8), Head::sigmoid), scale(fixed_mask(9), 0.5));
  }));
  cases.push_back(network_case("loss_attn_sparse", 1, [](const Inputs& p) {
    return loss_attn_sparse(two_layer(p, fixed_input(10), Head::sigmoid), two_layer(p, fixed_input(11), Head::sigmoid));
  }));
  cases.push_back(network_case("loss_attn_supervised", 1, [](const Inputs& p) {
    const Tensor<double> mx[] = {fixed_mask(12)};
    const Tensor<double> my[] = {fixed_mask(13)};
    const Tensor<double> ax[] = {two_layer(p, fixed_input(14), Head::sigmoid)};
    const Tensor<double> ay[] = {two_layer(p, fixed_input(15), Head::sigmoid)};
    return loss_attn_supervised<double>(ax, mx, ay, my);
  }));
  return cases;
}

#define AGAN_INSTANTIATE_OBJECTIVES(S)                                                                         \
  template Tensor<S> loss_gan_d<S>(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> loss_gan_g<S>(const Tensor<S>&);                                                          \
  template Tensor<S> loss_cycle<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template Tensor<S> loss_attn_cycle<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> loss_attn_sparse<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> loss_attn_supervised<S>(std::span<const Tensor<S>>, std::span<const Tensor<S>>,           \
                                             std::span<const Tensor<S>>, std::span<const Tensor<S>>);          \
  template GeneratorObjective<S> total_generator_loss<S>(TrainMode, const LossWeights&,                        \
                                                         const GeneratorComponents<S>&);

AGAN_INSTANTIATE_OBJECTIVES(float)
AGAN_INSTANTIATE_OBJECTIVES(double)

}  // namespace agan
