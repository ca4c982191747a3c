#include "agan/data.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace agan {

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DataError("synth config: " + msg); };
  if (image_size < 8) fail("image_size must be at least 8");
  if (shapes_min < 1 || shapes_max < shapes_min) fail("need 1 <= shapes_min <= shapes_max");
  if (!(radius_min > 0.0) || radius_max < radius_min || radius_max > 0.5) fail("need 0 < radius_min <= radius_max <= 0.5");
  if (stripe_period_min < 2 || stripe_period_max < stripe_period_min) fail("need 2 <= stripe_period_min <= stripe_period_max");
  auto range01 = [](double lo, double hi) { return lo >= 0.0 && hi >= lo && hi <= 1.0; };
  if (!range01(stripe_dark_min, stripe_dark_max) || !range01(stripe_light_min, stripe_light_max))
    fail("stripe levels must be ordered ranges inside [0, 1]");
  if (!(stripe_vertical_prob >= 0.0 && stripe_vertical_prob <= 1.0)) fail("stripe_vertical_prob must lie in [0, 1]");
  if (!range01(fill_r_min, fill_r_max) || !range01(fill_g_min, fill_g_max) || !range01(fill_b_min, fill_b_max))
    fail("fill colour bounds must be ordered ranges inside [0, 1]");
  if (background_cells < 1) fail("background_cells must be positive");
  if (!(coverage_min >= 0.0) || coverage_max < coverage_min || coverage_max > 1.0) fail("need 0 <= coverage_min <= coverage_max <= 1");
  if (count < 0) fail("count must be non-negative");
}

namespace {

using Rgb = std::array<double, 3>;

struct Ellipse {
  double cx, cy, rx, ry, angle;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
    return u * u + v * v <= 1.0;
  }
};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Low-frequency value noise around a random base colour; identical distribution for both domains.
std::vector<Rgb> background(const SynthConfig& cfg, Prng& prng) {
  const Rgb base{prng.uniform(0.15, 0.45), prng.uniform(0.35, 0.65), prng.uniform(0.25, 0.55)};
  const int n = cfg.background_cells + 1;
  std::vector<Rgb> lattice(static_cast<std::size_t>(n * n));
  for (auto& node : lattice)
    for (int c = 0; c < 3; ++c) node[c] = base[c] + prng.uniform(-cfg.background_jitter, cfg.background_jitter);
  const Index size = cfg.image_size;
  std::vector<Rgb> pixels(static_cast<std::size_t>(size * size));
  for (Index y = 0; y < size; ++y) {
    const double gy = (static_cast<double>(y) + 0.5) / static_cast<double>(size) * cfg.background_cells;
    const int iy = std::min(static_cast<int>(gy), cfg.background_cells - 1);
    const double ty = smoothstep(gy - iy);
    for (Index x = 0; x < size; ++x) {
      const double gx = (static_cast<double>(x) + 0.5) / static_cast<double>(size) * cfg.background_cells;
      const int ix = std::min(static_cast<int>(gx), cfg.background_cells - 1);
      const double tx = smoothstep(gx - ix);
      const Rgb& a = lattice[static_cast<std::size_t>(iy * n + ix)];
      const Rgb& b = lattice[static_cast<std::size_t>(iy * n + ix + 1)];
      const Rgb& c = lattice[static_cast<std::size_t>((iy + 1) * n + ix)];
      const Rgb& d = lattice[static_cast<std::size_t>((iy + 1) * n + ix + 1)];
      Rgb& out = pixels[static_cast<std::size_t>(y * size + x)];
      for (int ch = 0; ch < 3; ++ch) {
        out[ch] = (a[ch] * (1 - tx) + b[ch] * tx) * (1 - ty) + (c[ch] * (1 - tx) + d[ch] * tx) * ty;
      }
    }
  }
  return pixels;
}

std::uint8_t unit_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

SynthImage synth_image(const SynthConfig& cfg, Domain domain, Prng& prng) {
  const Index size = cfg.image_size;
  const double s = static_cast<double>(size);
  std::vector<std::uint8_t> mask;
  double coverage = 0.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 10000) throw DataError("synth: cannot reach the configured mask coverage window");
    const int shapes = cfg.shapes_min + static_cast<int>(prng.uniform_int(
                                            static_cast<std::uint64_t>(cfg.shapes_max - cfg.shapes_min + 1)));
    std::vector<Ellipse> ellipses;
    for (int k = 0; k < shapes; ++k) {
      const double rx = prng.uniform(cfg.radius_min, cfg.radius_max) * s;
      const double ry = prng.uniform(cfg.radius_min, cfg.radius_max) * s;
      ellipses.push_back({prng.uniform(0.2, 0.8) * s, prng.uniform(0.2, 0.8) * s, rx, ry,
                          prng.uniform(0.0, std::numbers::pi)});
    }
    mask.assign(static_cast<std::size_t>(size * size), 0);
    Index covered = 0;
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) {
        for (const auto& e : ellipses) {
          if (e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
            mask[static_cast<std::size_t>(y * size + x)] = 1;
            ++covered;
            break;
          }
        }
      }
    coverage = static_cast<double>(covered) / (s * s);
    if (coverage >= cfg.coverage_min && coverage <= cfg.coverage_max) break;
  }

  const auto bg = background(cfg, prng);
  Rgb fill{};
  int period = 0, phase = 0;
  bool vertical = false;
  double dark = 0.0, light = 0.0;
  if (domain == Domain::x) {
    fill = {prng.uniform(cfg.fill_r_min, cfg.fill_r_max), prng.uniform(cfg.fill_g_min, cfg.fill_g_max),
            prng.uniform(cfg.fill_b_min, cfg.fill_b_max)};
  } else {
    period = cfg.stripe_period_min +
             static_cast<int>(prng.uniform_int(static_cast<std::uint64_t>(cfg.stripe_period_max - cfg.stripe_period_min + 1)));
    phase = static_cast<int>(prng.uniform_int(static_cast<std::uint64_t>(period)));
    if (!cfg.stripe_random_phase) phase = 0;
    vertical = prng.bernoulli(cfg.stripe_vertical_prob);
    dark = prng.uniform(cfg.stripe_dark_min, cfg.stripe_dark_max);
    light = prng.uniform(cfg.stripe_light_min, cfg.stripe_light_max);
  }

  SynthImage out{Image8(3, size, size), Image8(1, size, size), coverage};
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * size + x);
      Rgb color = bg[i];
      if (mask[i]) {
        if (domain == Domain::x) {
          color = fill;
        } else {
          const Index coord = (vertical ? x : y) + phase;
          const double v = (coord % period) * 2 < period ? dark : light;
          color = {v, v, v};
        }
      }
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = unit_byte(color[c]);
      out.mask.at(0, y, x) = mask[i] ? 255 : 0;
    }
  return out;
}

DatasetManifest synth_generate(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw DataError(root.string() + ": cannot create dataset root");
  const int test_count = cfg.test_count < 0 ? cfg.count : cfg.test_count;
  for (Domain domain : {Domain::x, Domain::y}) {
    const std::string suffix = domain == Domain::x ? "A" : "B";
    for (int split = 0; split < 2; ++split) {
      const bool train = split == 0;
      const std::string prefix = train ? "train" : "test";
      const int n = train ? cfg.count : test_count;
      fs::create_directories(root / (prefix + suffix));
      fs::create_directories(root / ("masks" + suffix));
      for (int i = 0; i < n; ++i) {
        Prng prng(derive_seed(cfg.seed, domain == Domain::x ? 1 : 2, static_cast<std::uint64_t>(split) << 32 | i));
        const SynthImage img = synth_image(cfg, domain, prng);
        char name[32];
        std::snprintf(name, sizeof name, "%s_%05d.png", prefix.c_str(), i);
        write_png(img.image, root / (prefix + suffix) / name);
        write_png(img.mask, root / ("masks" + suffix) / name);
      }
    }
  }
  return DatasetManifest::load(root);
}

}  // namespace agan
