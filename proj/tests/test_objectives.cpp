#include "doctest.h"

#include "agan/objectives.hpp"

#include <cmath>

using namespace agan;

namespace {

using T = Tensor<double>;

// Plain-loop oracles.
double oracle_mean_sq_offset(const T& t, double target) {
  double acc = 0;
  for (Index i = 0; i < t.numel(); ++i) acc += (t[i] - target) * (t[i] - target);
  return acc / static_cast<double>(t.numel());
}

double oracle_mae(const T& a, const T& b) {
  double acc = 0;
  for (Index i = 0; i < a.numel(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.numel());
}

T random_map(Prng& prng, Shape shape = {1, 4, 4}, double lo = 0.0, double hi = 1.0) {
  return random_tensor(shape, prng, lo, hi);
}

T binary_mask(Prng& prng, Shape shape = {1, 4, 4}) {
  Buffer<double> m(shape_numel(shape));
  for (Index i = 0; i < m.size(); ++i) m[i] = prng.bernoulli(0.5) ? 1.0 : 0.0;
  return T::from_buffer(shape, m);
}

}  // namespace

TEST_CASE("adversarial losses") {
  CHECK(loss_gan_d(T::ones({1, 4, 4}), T::zeros({1, 4, 4})).item() == 0.0);
  CHECK(loss_gan_d(T::zeros({1, 4, 4}), T::ones({1, 4, 4})).item() == 2.0);
  CHECK(loss_gan_g(T::ones({1, 4, 4})).item() == 0.0);
  CHECK(loss_gan_g(T::zeros({1, 4, 4})).item() == 1.0);
  Prng prng(1);
  for (int i = 0; i < 10; ++i) {
    auto real = random_map(prng, {1, 4, 4}, -2, 2);
    auto fake = random_map(prng, {1, 4, 4}, -2, 2);
    CHECK(loss_gan_d(real, fake).item() ==
          doctest::Approx(oracle_mean_sq_offset(real, 1.0) + oracle_mean_sq_offset(fake, 0.0)).epsilon(1e-12));
    CHECK(loss_gan_g(fake).item() == doctest::Approx(oracle_mean_sq_offset(fake, 1.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss_gan_d(T{}, T::ones({1})), TensorError);
}

TEST_CASE("cycle loss") {
  auto x = T::full({3, 4, 4}, 0.3);
  auto y = T::full({3, 4, 4}, -0.2);
  CHECK(loss_cycle(x, x, y, y).item() == 0.0);
  CHECK(loss_cycle(x, T::full({3, 4, 4}, 0.4), y, y).item() == doctest::Approx(0.1));
  Prng prng(2);
  for (int i = 0; i < 10; ++i) {
    auto a = random_map(prng, {3, 4, 4}, -1, 1), b = random_map(prng, {3, 4, 4}, -1, 1);
    auto c = random_map(prng, {3, 4, 4}, -1, 1), d = random_map(prng, {3, 4, 4}, -1, 1);
    const double value = loss_cycle(a, b, c, d).item();
    CHECK(value == doctest::Approx(oracle_mae(a, b) + oracle_mae(c, d)).epsilon(1e-12));
    CHECK(value == loss_cycle(c, d, a, b).item());
    CHECK(value >= 0.0);
  }
  CHECK_THROWS_AS(loss_cycle(x, T::zeros({3, 4, 3}), y, y), TensorError);
}

TEST_CASE("attention cycle loss") {
  Prng prng(3);
  auto a = random_map(prng), b = random_map(prng);
  CHECK(loss_attn_cycle(a, a, b, b).item() == 0.0);
  CHECK(loss_attn_cycle(T::full({1, 4, 4}, 0.5), T::full({1, 4, 4}, 0.3), b, b).item() == doctest::Approx(0.2));
  for (int i = 0; i < 10; ++i) {
    auto p = random_map(prng), q = random_map(prng), r = random_map(prng), s = random_map(prng);
    const double value = loss_attn_cycle(p, q, r, s).item();
    CHECK(value == doctest::Approx(oracle_mae(p, q) + oracle_mae(r, s)).epsilon(1e-12));
    CHECK(value == loss_attn_cycle(r, s, p, q).item());
  }
  CHECK_THROWS_AS(loss_attn_cycle(a, T::zeros({1, 2, 2}), b, b), TensorError);
}

TEST_CASE("sparse attention loss") {
  CHECK(loss_attn_sparse(T::zeros({1, 4, 4}), T::zeros({1, 4, 4})).item() == 0.0);
  CHECK(loss_attn_sparse(T::ones({1, 4, 4}), T::ones({1, 4, 4})).item() == 2.0);
  Buffer<double> half(16);
  for (Index i = 0; i < 16; ++i) half[i] = i < 8 ? 1.0 : 0.0;
  CHECK(loss_attn_sparse(T::from_buffer({1, 4, 4}, half), T::zeros({1, 4, 4})).item() == 0.5);
}

TEST_CASE("supervised attention loss") {
  Prng prng(4);
  auto m = binary_mask(prng);
  const T maps[] = {m.clone()};
  const T masks[] = {m};
  CHECK(loss_attn_supervised<double>(maps, masks, maps, masks).item() == 0.0);
  const T halves[] = {T::full({1, 4, 4}, 0.5)};
  CHECK(loss_attn_supervised<double>(halves, masks, halves, masks).item() == doctest::Approx(1.0));

  std::vector<T> px, mx, py, my;
  double expected_x = 0, expected_y = 0;
  for (int i = 0; i < 3; ++i) {
    px.push_back(random_map(prng));
    mx.push_back(binary_mask(prng));
    py.push_back(random_map(prng));
    my.push_back(binary_mask(prng));
    expected_x += oracle_mae(px.back(), mx.back()) / 3.0;
    expected_y += oracle_mae(py.back(), my.back()) / 3.0;
  }
  CHECK(loss_attn_supervised<double>(px, mx, py, my).item() == doctest::Approx(expected_x + expected_y).epsilon(1e-12));

  const T fuzzy[] = {T::full({1, 4, 4}, 0.3)};
  CHECK_THROWS_AS(loss_attn_supervised<double>(maps, fuzzy, maps, masks), TensorError);
  const T nearly[] = {T::full({1, 4, 4}, 1.0 + 1e-7)};
  CHECK_NOTHROW(loss_attn_supervised<double>(maps, nearly, maps, masks));
}

TEST_CASE("total generator loss") {
  auto s = [](double v) { return T::scalar(v); };
  LossWeights w{10, 1, 1, 1};
  SUBCASE("all zero") {
    GeneratorComponents<double> c{s(0), s(0), s(0), s(0), s(0), T{}};
    CHECK(total_generator_loss(TrainMode::unsupervised, w, c).report.total_g == 0.0);
  }
  SUBCASE("weighted unsupervised sum") {
    GeneratorComponents<double> c{s(1), s(1), s(1), s(1), s(1), T{}};
    auto out = total_generator_loss(TrainMode::unsupervised, w, c);
    CHECK(out.report.total_g == 14.0);
    CHECK(out.total.item() == 14.0);
    CHECK_FALSE(out.report.a_sup.has_value());
  }
  SUBCASE("supervised excludes attention-cycle and sparse terms") {
    GeneratorComponents<double> c{s(1), s(2), s(0.5), T{}, s(1), s(0.25)};
    CHECK_THROWS_AS(total_generator_loss(TrainMode::supervised, w, c), std::invalid_argument);
    c.a_sparse = T{};
    auto out = total_generator_loss(TrainMode::supervised, LossWeights{10, 1, 1, 2}, c);
    CHECK(out.report.total_g == doctest::Approx(1 + 2 + 5 + 0.5));
    CHECK_FALSE(out.report.a_cyc.has_value());
  }
  SUBCASE("missing component") {
    GeneratorComponents<double> c{s(1), s(1), s(1), T{}, s(1), T{}};
    CHECK_THROWS_AS(total_generator_loss(TrainMode::unsupervised, w, c), std::invalid_argument);
  }
  SUBCASE("scaling one weight scales exactly that contribution") {
    Prng prng(5);
    GeneratorComponents<double> c{s(prng.uniform()), s(prng.uniform()), s(prng.uniform()), s(prng.uniform()),
                                  s(prng.uniform()), T{}};
    const double base = total_generator_loss(TrainMode::unsupervised, w, c).report.total_g;
    LossWeights scaled = w;
    scaled.lambda_a_sparse *= 3.0;
    const double bumped = total_generator_loss(TrainMode::unsupervised, scaled, c).report.total_g;
    CHECK(bumped - base == doctest::Approx(2.0 * w.lambda_a_sparse * c.a_sparse.item()).epsilon(1e-9));
  }
  SUBCASE("negative weight rejected") {
    GeneratorComponents<double> c{s(1), s(1), s(1), s(1), s(1), T{}};
    CHECK_THROWS_AS(total_generator_loss(TrainMode::unsupervised, LossWeights{-1, 1, 1, 1}, c), std::invalid_argument);
  }
}

TEST_CASE("loss report csv") {
  LossReport r;
  r.gan_g_xy = 0.5;
  r.a_sup = 0.25;
  CHECK(LossReport::csv_header() == "gan_g_xy,gan_g_yx,gan_d_x,gan_d_y,cyc,a_cyc,a_sparse,a_sup,total_g,total_d");
  CHECK(r.csv_row() == "0.5,0,0,0,0,,,0.25,0,0");
  CHECK(r.all_finite());
  r.total_d = std::nan("");
  CHECK_FALSE(r.all_finite());
}

TEST_CASE("every loss differentiates through a two-layer network") {
  for (const auto& gc : objective_gradcheck_cases()) {
    Prng prng(77);
    const auto result = run_gradcheck(gc, 3, kGradcheckEpsilon, kGradcheckTolerance, prng);
    INFO(result.name << " " << result.max_relative_error);
    CHECK(result.passed);
  }
}
