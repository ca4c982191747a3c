#include "doctest.h"

#include "agan/metrics.hpp"
#include "oracles.hpp"

#include <cmath>
#include <sstream>

using namespace agan;

namespace {

Tensor<float> empty_mask(Index n) { return Tensor<float>::zeros({1, n, n}); }

}  // namespace

TEST_CASE("psnr closed forms") {
  const Index n = 32;
  Image8 a(3, n, n, 100);
  Image8 b(3, n, n, 101);
  CHECK(psnr_background(a, a, empty_mask(n)) == kPsnrInfinity);
  CHECK(psnr_background(a, b, empty_mask(n)) == doctest::Approx(48.1308).epsilon(1e-6));
  CHECK(psnr_background(a, b, empty_mask(n)) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-12));
  // Full mask zeroes everything.
  CHECK(psnr_background(a, b, Tensor<float>::ones({1, n, n})) == kPsnrInfinity);
}

TEST_CASE("psnr half mask against brute force") {
  const Index n = 32;
  Prng prng(3);
  Image8 a = oracle::random_image(3, n, prng);
  Image8 b = a;
  Tensor<float> mask = Tensor<float>::zeros({1, n, n});
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n / 2; ++x) mask.mutable_data()[y * n + x] = 1.0f;
  for (auto& v : b.pixels) v = static_cast<std::uint8_t>(std::min(255, v + 2));
  const double got = psnr_background(a, b, mask);
  CHECK(std::abs(got - oracle::psnr(a, b, mask)) <= 1e-9);
  // The literal mean runs over twice as many pixels, so it sits 10*log10(2) dB above the background-only variant.
  const double bg = psnr_background(a, b, mask, PsnrDenominator::background_only);
  CHECK(got - bg == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("ssim closed forms and oracle") {
  const Index n = 32;
  Image8 a(3, n, n, 120);
  Image8 b(3, n, n, 130);
  CHECK(ssim_background(a, a, empty_mask(n)) == doctest::Approx(1.0).epsilon(1e-12));
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const double expected = (2.0 * 120 * 130 + c1) * c2 / ((120.0 * 120 + 130.0 * 130 + c1) * c2);
  CHECK(ssim_background(a, b, empty_mask(n)) == doctest::Approx(expected).epsilon(1e-9));

  Prng prng(8);
  for (int t = 0; t < 5; ++t) {
    const Image8 x = oracle::random_image(3, n, prng);
    const Image8 y = oracle::random_image(3, n, prng);
    CHECK(std::abs(ssim_background(x, y, empty_mask(n)) - oracle::ssim(x, y, empty_mask(n))) <= 1e-4);
  }
  CHECK_THROWS_AS(ssim_background(Image8(3, 8, 8), Image8(3, 8, 8), empty_mask(8)), MetricError);
  CHECK_THROWS_AS(psnr_background(Image8(3, 8, 8), Image8(3, 8, 9), empty_mask(8)), MetricError);
}

TEST_CASE("metric properties") {
  const Index n = 32;
  Prng prng(21);
  for (int t = 0; t < 10; ++t) {
    const Image8 x = oracle::random_image(3, n, prng);
    Image8 y = oracle::random_image(3, n, prng);
    const Tensor<float> mask = oracle::random_mask(n, prng);
    CHECK(psnr_background(x, y, mask) == psnr_background(y, x, mask));
    CHECK(ssim_background(x, y, mask) == doctest::Approx(ssim_background(y, x, mask)).epsilon(1e-12));

    // Changes confined to the object region are invisible.
    Image8 noisy = y;
    for (Index c = 0; c < 3; ++c)
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
          if (mask[i * n + j] > 0.5f) noisy.at(c, i, j) = static_cast<std::uint8_t>(prng.uniform_int(256));
        }
    CHECK(psnr_background(x, noisy, mask) == psnr_background(x, y, mask));
    CHECK(ssim_background(x, noisy, mask) == ssim_background(x, y, mask));

    // Empty mask reduces to plain PSNR.
    CHECK(std::abs(psnr_background(x, y, empty_mask(n)) - oracle::plain_psnr(x, y)) <= 1e-9);
  }
}

TEST_CASE("attention iou") {
  const Index n = 8;
  Tensor<float> mask = Tensor<float>::zeros({1, n, n});
  for (Index i = 0; i < 16; ++i) mask.mutable_data()[i] = 1.0f;
  CHECK(attention_iou(mask, mask) == 1.0);
  CHECK(attention_iou(Tensor<float>::zeros({1, n, n}), Tensor<float>::zeros({1, n, n})) == 1.0);

  Tensor<float> disjoint = Tensor<float>::zeros({1, n, n});
  for (Index i = 16; i < 32; ++i) disjoint.mutable_data()[i] = 0.9f;
  CHECK(attention_iou(disjoint, mask) == 0.0);

  Tensor<float> wider = Tensor<float>::zeros({1, n, n});
  for (Index i = 0; i < 32; ++i) wider.mutable_data()[i] = 0.75f;
  CHECK(attention_iou(wider, mask) == 0.5);

  // Joint horizontal flip leaves the score unchanged.
  Prng prng(2);
  for (int t = 0; t < 10; ++t) {
    Buffer<float> m(n * n), a(n * n);
    for (Index i = 0; i < n * n; ++i) {
      m[i] = prng.bernoulli(0.3) ? 1.0f : 0.0f;
      a[i] = static_cast<float>(prng.uniform());
    }
    const auto mt = Tensor<float>::from_buffer({1, n, n}, m), at = Tensor<float>::from_buffer({1, n, n}, a);
    CHECK(attention_iou(at, mt) == attention_iou(flip_horizontal(at), flip_horizontal(mt)));
  }
}

TEST_CASE("aggregates") {
  const auto a = aggregate({3.0, 1.0, 2.0});
  CHECK(a.mean == 2.0);
  CHECK(a.median == 2.0);
  const auto b = aggregate({1.0, 4.0, kPsnrInfinity, kPsnrInfinity}, kPsnrClamp);
  CHECK(b.mean == doctest::Approx((1.0 + 4.0 + 200.0) / 4.0));
  CHECK(b.median == kPsnrInfinity);

  EvalReport r;
  r.rows = {{"a", 10.0, 0.5, 0.25}, {"b", 30.0, 0.7, 0.75}, {"c", kPsnrInfinity, 1.0, 1.0}};
  CHECK(r.psnr().mean == doctest::Approx(140.0 / 3.0));
  CHECK(r.psnr().median == 30.0);
  CHECK(r.iou().mean == doctest::Approx(2.0 / 3.0));
  CHECK(r.csv() == "id,psnr_bg,ssim_bg,attn_iou\na,10,0.5,0.25\nb,30,0.7,0.75\nc,inf,1,1\n");
  CHECK(r.markdown().find("| x2y | 3 |") != std::string::npos);
}

TEST_CASE("testset evaluation") {
  const fs::path dir = fs::temp_directory_path() / "agan_test_metrics_eval";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.count = 2;
  cfg.test_count = 5;
  auto manifest = synth_generate(cfg, dir);
  Prng prng(1);
  const auto bundle = build_bundle<float>(8, 3, 32, prng);

  const auto identity = evaluate_testset(bundle, manifest, Direction::x2y, ForcedAttention::zeros);
  REQUIRE(identity.rows.size() == 5);
  for (const auto& row : identity.rows) CHECK(*row.psnr_bg == kPsnrInfinity);
  CHECK(identity.psnr().mean == kPsnrClamp);

  const auto normal = evaluate_testset(bundle, manifest, Direction::y2x);
  CHECK(normal.rows.size() == 5);
  std::vector<double> psnrs;
  for (const auto& row : normal.rows) psnrs.push_back(*row.psnr_bg);
  CHECK(normal.psnr().median == aggregate(psnrs, kPsnrClamp).median);

  fs::remove_all(dir / "masksB");
  manifest = DatasetManifest::load(dir);
  std::ostringstream log;
  const auto unmasked = evaluate_testset(bundle, manifest, Direction::y2x, ForcedAttention::none, &log);
  CHECK_FALSE(unmasked.has_masks());
  CHECK(unmasked.csv().rfind("id\n", 0) == 0);
  CHECK(log.str().find("notice") != std::string::npos);

  fs::remove_all(dir / "testA");
  fs::remove_all(dir / "masksA");
  manifest = DatasetManifest::load(dir);
  CHECK_THROWS_AS(evaluate_testset(bundle, manifest, Direction::x2y), MetricError);
  CHECK(parse_direction("y2x") == Direction::y2x);
  CHECK_THROWS_AS(parse_direction("sideways"), std::invalid_argument);
}
