#pragma once

#include "agan/data.hpp"
#include "agan/networks.hpp"

#include <limits>
#include <optional>

namespace agan {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Returned by psnr_background when the two images agree exactly.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
/// Stand-in for +inf when averaging.
inline constexpr double kPsnrClamp = 100.0;

enum class PsnrDenominator {
  all_pixels,       // zeroed object pixels still count
  background_only,  // diagnostic variant: mean over background pixels only
};

/// PSNR (peak 255) between x*(1-m) and g*(1-m). Images are 8-bit {C,H,W}; the mask is a
/// {1,H,W} tensor with values 0/1 as produced by decode_mask.
double psnr_background(const Image8& original, const Image8& generated, const Tensor<float>& mask,
                       PsnrDenominator denominator = PsnrDenominator::all_pixels);

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows of the object-zeroed images,
/// averaged over channels. C1 = (0.01*255)^2, C2 = (0.03*255)^2.
double ssim_background(const Image8& original, const Image8& generated, const Tensor<float>& mask);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// |A ∩ M| / |A ∪ M| with A = (map >= threshold); 1 when both are empty.
double attention_iou(const Tensor<float>& map, const Tensor<float>& mask, double threshold = 0.5);

enum class Direction { x2y, y2x };
std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view text);

struct EvalRow {
  std::string id;
  std::optional<double> psnr_bg;
  std::optional<double> ssim_bg;
  std::optional<double> attn_iou;
};

struct Aggregate {
  double mean = 0.0;
  double median = 0.0;
};

struct EvalReport {
  Direction direction = Direction::x2y;
  std::vector<EvalRow> rows;

  bool has_masks() const;
  /// +inf PSNR values enter the mean as kPsnrClamp; the median uses them as they are.
  Aggregate psnr() const;
  Aggregate ssim() const;
  Aggregate iou() const;

  /// "id,psnr_bg,ssim_bg,attn_iou" (metric columns only when masks were available).
  std::string csv() const;
  std::string markdown() const;
};

Aggregate aggregate(std::vector<double> values, double clamp_high = std::numeric_limits<double>::infinity());

/// Translates every test image of the source domain and scores it against its mask.
/// Missing masks leave the metric cells empty and print a notice to `log`.
EvalReport evaluate_testset(const ModelBundle<float>& bundle, const DatasetManifest& manifest, Direction direction,
                            ForcedAttention forced = ForcedAttention::none, std::ostream* log = nullptr);

}  // namespace agan
