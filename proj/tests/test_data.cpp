#include "doctest.h"

#include "agan/data.hpp"

#include <fstream>
#include <iterator>
#include <optional>

using namespace agan;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("agan_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("image decode affine map") {
  const auto dir = scratch("decode");
  Image8 img(3, 1, 3);
  for (Index c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = 0;
    img.at(c, 0, 1) = 255;
    img.at(c, 0, 2) = 128;
  }
  write_png(img, dir / "px.png");
  auto t = decode_image(dir / "px.png");
  CHECK(t.shape() == Shape{3, 1, 3});
  CHECK(t[0] == -1.0f);
  CHECK(t[1] == 1.0f);
  CHECK(t[2] == doctest::Approx(0.0039215686).epsilon(1e-6));
}

TEST_CASE("image encode endpoints and roundtrip bound") {
  auto t = Tensor<float>::from_values({3, 1, 2}, {-1.0f, 1.0f, -1.0f, 1.0f, -1.5f, 2.0f});
  auto bytes = tensor_to_image(t);
  CHECK(bytes.at(0, 0, 0) == 0);
  CHECK(bytes.at(0, 0, 1) == 255);
  CHECK(bytes.at(2, 0, 0) == 0);
  CHECK(bytes.at(2, 0, 1) == 255);

  const auto dir = scratch("roundtrip");
  Prng prng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Buffer<float> data(3 * 6 * 5);
    for (Index i = 0; i < data.size(); ++i) data[i] = static_cast<float>(prng.uniform(-1.2, 1.2));
    auto src = Tensor<float>::from_buffer({3, 6, 5}, data);
    encode_image(src, dir / "rt.png");
    auto back = decode_image(dir / "rt.png");
    const Buffer<float> clamped = src.data().max(-1.0f).min(1.0f);
    CHECK((back.data() - clamped).abs().maxCoeff() <= 1.0f / 255.0f + 1e-6f);
  }
}

TEST_CASE("mask threshold") {
  const auto dir = scratch("mask");
  Image8 gray(1, 1, 4);
  gray.pixels = {0, 127, 128, 255};
  write_png(gray, dir / "m.png");
  auto m = decode_mask(dir / "m.png");
  CHECK(m.shape() == Shape{1, 1, 4});
  CHECK(m[0] == 0.0f);
  CHECK(m[1] == 0.0f);
  CHECK(m[2] == 1.0f);
  CHECK(m[3] == 1.0f);
  write_png(Image8(1, 4, 4, 255), dir / "white.png");
  write_png(Image8(1, 4, 4, 0), dir / "black.png");
  CHECK(decode_mask(dir / "white.png").data().minCoeff() == 1.0f);
  CHECK(decode_mask(dir / "black.png").data().maxCoeff() == 0.0f);
}

TEST_CASE("decoder rejects corrupt files") {
  const auto dir = scratch("corrupt");
  {
    std::ofstream out(dir / "bad.png", std::ios::binary);
    out << "definitely not a png";
  }
  CHECK_THROWS_AS(decode_image(dir / "bad.png"), DataError);
  CHECK_THROWS_AS(decode_image(dir / "missing.png"), DataError);
}

TEST_CASE("synthetic dataset layout, coverage and determinism") {
  const auto dir = scratch("synth");
  SynthConfig cfg;
  cfg.count = 10;
  cfg.seed = 5;
  auto manifest = synth_generate(cfg, dir / "a");
  CHECK(manifest.train_a.size() == 10);
  CHECK(manifest.train_b.size() == 10);
  CHECK(manifest.test_a.size() == 10);
  CHECK(manifest.test_b.size() == 10);
  CHECK(manifest.masks_a.size() == 20);
  CHECK(manifest.masks_b.size() == 20);

  for (Domain d : {Domain::x, Domain::y}) {
    for (const auto& [stem, path] : manifest.masks(d)) {
      const auto m = decode_mask(path);
      const double coverage = m.data().template cast<double>().mean();
      CHECK(coverage >= 0.05);
      CHECK(coverage <= 0.45);
    }
  }

  synth_generate(cfg, dir / "b");
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    CHECK(slurp(entry.path()) == slurp(dir / "b" / rel));
  }
}

TEST_CASE("synthetic mask is the drawn object region") {
  SynthConfig cfg;
  Prng prng(3);
  for (int i = 0; i < 5; ++i) {
    const auto x = synth_image(cfg, Domain::x, prng);
    // Domain X objects are a solid fill, so every object pixel has the same colour.
    std::optional<std::array<std::uint8_t, 3>> fill;
    for (Index y = 0; y < cfg.image_size; ++y)
      for (Index xx = 0; xx < cfg.image_size; ++xx) {
        if (x.mask.at(0, y, xx) == 0) continue;
        const std::array<std::uint8_t, 3> px{x.image.at(0, y, xx), x.image.at(1, y, xx), x.image.at(2, y, xx)};
        if (!fill) fill = px;
        CHECK(px == *fill);
      }
    const auto stripes = synth_image(cfg, Domain::y, prng);
    for (Index y = 0; y < cfg.image_size; ++y)
      for (Index xx = 0; xx < cfg.image_size; ++xx) {
        if (stripes.mask.at(0, y, xx) == 0) continue;
        CHECK(stripes.image.at(0, y, xx) == stripes.image.at(1, y, xx));
      }
  }
}

TEST_CASE("manifest pairing rules") {
  const auto dir = scratch("manifest");
  write_png(Image8(3, 8, 8), dir / "trainA" / "b.png");
  write_png(Image8(3, 8, 8), dir / "trainA" / "a.png");
  write_png(Image8(1, 8, 8), dir / "masksA" / "a.png");
  auto m = DatasetManifest::load(dir);
  REQUIRE(m.train_a.size() == 2);
  CHECK(m.train_a[0].filename() == "a.png");
  CHECK(m.has_masks(Domain::x));
  CHECK_FALSE(m.has_masks(Domain::y));
  CHECK_NOTHROW(load_sample(m, Domain::x, m.train_a[0], true));
  CHECK_THROWS_AS(load_sample(m, Domain::x, m.train_a[1], true), DataError);

  write_png(Image8(1, 4, 4), dir / "masksA" / "b.png");
  m = DatasetManifest::load(dir);
  CHECK_THROWS_AS(load_sample(m, Domain::x, m.train_a[1], true), DataError);

  write_png(Image8(1, 8, 8), dir / "masksA" / "orphan.png");
  CHECK_THROWS_AS(DatasetManifest::load(dir), DataError);
  CHECK_THROWS_AS(DatasetManifest::load(dir / "nope"), DataError);
}

TEST_CASE("augmentation geometry") {
  CHECK(augment_scale(32) == 36);
  CHECK(augment_scale(256) == 286);

  SynthConfig cfg;
  Prng gen(11);
  const auto raw = synth_image(cfg, Domain::x, gen);
  Sample s{image_to_tensor(raw.image), Domain::x, mask_from_image(raw.mask), "", "s"};

  Prng prng(4);
  for (int i = 0; i < 20; ++i) {
    const auto a = augment(s, prng, true, 32);
    CHECK(a.image.shape() == Shape{3, 32, 32});
    CHECK(a.mask.shape() == Shape{1, 32, 32});
    CHECK(((a.mask.data() == 0.0f) || (a.mask.data() == 1.0f)).all());
  }
  const auto test = augment(s, prng, false, 32);
  CHECK((test.image.data() - s.image.data()).abs().maxCoeff() == 0.0f);

  auto twice = flip_horizontal(flip_horizontal(s.image));
  CHECK((twice.data() - s.image.data()).abs().maxCoeff() == 0.0f);
}

TEST_CASE("augmentation keeps image and mask aligned") {
  // Object colour is pure red over a black background; after joint augmentation the mask
  // must still select (mostly) red pixels and the background (mostly) black ones.
  const Index n = 32;
  Image8 img(3, n, n, 0);
  Image8 mask(1, n, n, 0);
  for (Index y = 8; y < 20; ++y)
    for (Index x = 4; x < 14; ++x) {
      img.at(0, y, x) = 255;
      mask.at(0, y, x) = 255;
    }
  Sample s{image_to_tensor(img), Domain::x, mask_from_image(mask), "", "s"};
  Prng prng(9);
  for (int i = 0; i < 20; ++i) {
    const auto a = augment(s, prng, true, n);
    Index inside = 0, red_inside = 0, outside = 0, red_outside = 0;
    for (Index p = 0; p < n * n; ++p) {
      const bool red = a.image[p] > 0.0f;
      if (a.mask[p] > 0.5f) {
        ++inside;
        red_inside += red;
      } else {
        ++outside;
        red_outside += red;
      }
    }
    CHECK(static_cast<double>(red_inside) / static_cast<double>(inside) > 0.8);
    CHECK(static_cast<double>(red_outside) / static_cast<double>(outside) < 0.05);
  }
}
