#pragma once

#include "agan/random.hpp"
#include "agan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace agan {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit planar (channel-major) raster.
struct Image8 {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(Index c, Index h, Index w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c * h * w), fill) {}

  std::uint8_t& at(Index c, Index y, Index x) { return pixels[static_cast<std::size_t>((c * height + y) * width + x)]; }
  std::uint8_t at(Index c, Index y, Index x) const {
    return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Reads an 8-bit PNG as `channels` (1 = gray, 3 = RGB) planes; 16-bit files are rejected.
Image8 read_png(const fs::path& path, Index channels);
void write_png(const Image8& image, const fs::path& path);

/// byte v -> v / 127.5 - 1
Tensor<float> image_to_tensor(const Image8& image);
/// Clamps to [-1, 1], maps back to [0, 255] and rounds half away from zero.
Image8 tensor_to_image(const Tensor<float>& tensor);
/// Attention maps and masks in [0, 1] -> bytes (v * 255, rounded).
Image8 unit_map_to_image(const Tensor<float>& map);

/// {3,H,W} tensor in [-1, 1].
Tensor<float> decode_image(const fs::path& path);
void encode_image(const Tensor<float>& tensor, const fs::path& path);
/// {1,H,W} tensor of 0/1: gray >= 128 -> 1.
Tensor<float> decode_mask(const fs::path& path);
Tensor<float> mask_from_image(const Image8& gray);

enum class Domain { x, y };

struct Sample {
  Tensor<float> image;  // {3,H,W}
  Domain domain = Domain::x;
  Tensor<float> mask;  // {1,H,W}, undefined when the dataset has none
  std::string source_path;
  std::string id;
};

/// CycleGAN-style directory layout: trainA, trainB, testA, testB and optional masksA, masksB
/// holding one grayscale PNG per image, matched by file stem.
struct DatasetManifest {
  fs::path root;
  std::vector<fs::path> train_a, train_b, test_a, test_b;
  std::map<std::string, fs::path> masks_a, masks_b;

  static DatasetManifest load(const fs::path& root);

  const std::vector<fs::path>& split(Domain domain, bool train) const;
  const std::map<std::string, fs::path>& masks(Domain domain) const;
  bool has_masks(Domain domain) const { return !masks(domain).empty(); }
  std::size_t count(Domain domain) const { return split(domain, true).size(); }
};

/// Decodes an image and, when `with_mask`, its paired mask; a missing or mis-sized mask is rejected.
Sample load_sample(const DatasetManifest& manifest, Domain domain, const fs::path& image_path, bool with_mask);

struct SynthConfig {
  Index image_size = 32;
  int shapes_min = 1;
  int shapes_max = 2;
  /// Ellipse semi-axes as a fraction of the image size.
  double radius_min = 0.12;
  double radius_max = 0.30;
  /// Stripe period of domain-Y objects, in pixels.
  int stripe_period_min = 4;
  int stripe_period_max = 6;
  /// Stripe levels are drawn per image from these grey ranges, in [0, 1].
  double stripe_dark_min = 0.05, stripe_dark_max = 0.18;
  double stripe_light_min = 0.82, stripe_light_max = 0.95;
  /// Probability that an image's stripes run vertically.
  double stripe_vertical_prob = 0.5;
  /// When false every stripe pattern starts at image row/column 0.
  bool stripe_random_phase = true;
  /// Value-noise lattice cells per side for the shared background texture.
  int background_cells = 3;
  double background_jitter = 0.15;
  /// Domain-X fill colour is drawn per image from this per-channel box, in [0, 1].
  double fill_r_min = 0.65, fill_r_max = 0.95;
  double fill_g_min = 0.25, fill_g_max = 0.50;
  double fill_b_min = 0.05, fill_b_max = 0.25;
  double coverage_min = 0.05;
  double coverage_max = 0.45;
  int count = 10;
  /// Test images per domain; negative means "same as count".
  int test_count = -1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthImage {
  Image8 image;
  Image8 mask;  // 1 channel, 0 or 255
  double coverage = 0.0;
};

/// Draws one image of the given domain; rejection-samples object layouts until the mask
/// coverage lies in [coverage_min, coverage_max].
SynthImage synth_image(const SynthConfig& cfg, Domain domain, Prng& prng);

/// Writes trainA/trainB/testA/testB plus masksA/masksB under `root`.
DatasetManifest synth_generate(const SynthConfig& cfg, const fs::path& root);

// Geometry helpers shared by augmentation and inference.
Tensor<float> resize_bilinear(const Tensor<float>& image, Index height, Index width);
Tensor<float> resize_nearest(const Tensor<float>& image, Index height, Index width);
Tensor<float> crop(const Tensor<float>& image, Index top, Index left, Index height, Index width);
Tensor<float> flip_horizontal(const Tensor<float>& image);

/// Intermediate training scale, ceil(image_size * 286 / 256).
Index augment_scale(Index image_size);

/// Train: bilinear scale to augment_scale(), random crop back to image_size, horizontal flip
/// with probability 1/2 (draw order: crop top, crop left, flip). Test: scale to image_size.
/// Masks follow the same geometry with nearest-neighbour resampling.
Sample augment(const Sample& sample, Prng& prng, bool train_mode, Index image_size);

}  // namespace agan
