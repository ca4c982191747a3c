#include "agan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace agan {

namespace {

void check_pair(const char* op, const Image8& a, const Image8& b, const Tensor<float>& mask) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw MetricError(std::string(op) + ": image shapes differ");
  }
  if (mask.shape() != Shape{1, a.height, a.width}) {
    throw MetricError(std::string(op) + ": mask shape " + shape_string(mask.shape()) + " does not match image " +
                      shape_string({a.channels, a.height, a.width}));
  }
}

// Object-zeroed plane c of an 8-bit image as doubles.
std::vector<double> masked_plane(const Image8& img, const Tensor<float>& mask, Index c) {
  std::vector<double> out(static_cast<std::size_t>(img.height * img.width));
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x) {
      const Index p = y * img.width + x;
      out[static_cast<std::size_t>(p)] = (1.0 - mask[p]) * img.at(c, y, x);
    }
  return out;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kSsimWindow);
  const int r = kSsimWindow / 2;
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    k[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, Index h, Index w, const std::vector<double>& k) {
  const Index n = static_cast<Index>(k.size());
  const Index ho = h - n + 1, wo = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * wo));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y * w + x + i)];
      rows[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ho * wo));
  for (Index y = 0; y < ho; ++y)
    for (Index x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * wo + x)];
      out[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  return out;
}

}  // namespace

double psnr_background(const Image8& original, const Image8& generated, const Tensor<float>& mask,
                       PsnrDenominator denominator) {
  check_pair("psnr_background", original, generated, mask);
  double sse = 0.0;
  for (Index c = 0; c < original.channels; ++c) {
    const auto a = masked_plane(original, mask, c);
    const auto b = masked_plane(generated, mask, c);
    for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  }
  double count = static_cast<double>(original.channels * original.height * original.width);
  if (denominator == PsnrDenominator::background_only) {
    const double background = static_cast<double>(mask.numel()) - mask.data().template cast<double>().sum();
    count = background * static_cast<double>(original.channels);
    if (count == 0.0) return kPsnrInfinity;
  }
  const double mse = sse / count;
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_background(const Image8& original, const Image8& generated, const Tensor<float>& mask) {
  check_pair("ssim_background", original, generated, mask);
  const Index h = original.height, w = original.width;
  if (h < kSsimWindow || w < kSsimWindow) {
    throw MetricError("ssim_background: image " + shape_string({h, w}) + " smaller than the " +
                      std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  const auto k = gaussian_kernel();
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  for (Index c = 0; c < original.channels; ++c) {
    const auto a = masked_plane(original, mask, c);
    const auto b = masked_plane(generated, mask, c);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, k), mu_b = filter_valid(b, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(original.channels);
}

double attention_iou(const Tensor<float>& map, const Tensor<float>& mask, double threshold) {
  if (map.numel() != mask.numel()) {
    throw MetricError("attention_iou: map " + shape_string(map.shape()) + " and mask " + shape_string(mask.shape()) +
                      " differ in size");
  }
  Index inter = 0, uni = 0;
  for (Index i = 0; i < map.numel(); ++i) {
    const bool a = map[i] >= threshold;
    const bool m = mask[i] >= 0.5f;
    inter += a && m;
    uni += a || m;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string_view direction_name(Direction d) { return d == Direction::x2y ? "x2y" : "y2x"; }

Direction parse_direction(std::string_view text) {
  if (text == "x2y") return Direction::x2y;
  if (text == "y2x") return Direction::y2x;
  throw std::invalid_argument("unknown direction '" + std::string(text) + "' (expected x2y or y2x)");
}

Aggregate aggregate(std::vector<double> values, double clamp_high) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  double sum = 0.0;
  for (double v : values) sum += std::min(v, clamp_high);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return {sum / static_cast<double>(n), median};
}

bool EvalReport::has_masks() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const EvalRow& r) { return r.psnr_bg.has_value(); });
}

namespace {

std::vector<double> column(const std::vector<EvalRow>& rows, std::optional<double> EvalRow::*field) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.*field) out.push_back(*(r.*field));
  }
  return out;
}

std::string cell(std::optional<double> v) {
  if (!v) return "";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

}  // namespace

Aggregate EvalReport::psnr() const { return aggregate(column(rows, &EvalRow::psnr_bg), kPsnrClamp); }
Aggregate EvalReport::ssim() const { return aggregate(column(rows, &EvalRow::ssim_bg)); }
Aggregate EvalReport::iou() const { return aggregate(column(rows, &EvalRow::attn_iou)); }

std::string EvalReport::csv() const {
  const bool metrics = has_masks();
  std::string out = metrics ? "id,psnr_bg,ssim_bg,attn_iou\n" : "id\n";
  for (const auto& r : rows) {
    out += r.id;
    if (metrics) out += "," + cell(r.psnr_bg) + "," + cell(r.ssim_bg) + "," + cell(r.attn_iou);
    out += "\n";
  }
  return out;
}

std::string EvalReport::markdown() const {
  std::string out = "| Direction | Samples | PSNR mean (dB) | PSNR median (dB) | SSIM mean | SSIM median | IoU mean | IoU median |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  char buf[256];
  if (has_masks()) {
    const auto p = psnr(), s = ssim(), i = iou();
    std::snprintf(buf, sizeof buf, "| %s | %zu | %.4f | %.4f | %.4f | %.4f | %.4f | %.4f |\n",
                  std::string(direction_name(direction)).c_str(), rows.size(), p.mean, p.median, s.mean, s.median,
                  i.mean, i.median);
  } else {
    std::snprintf(buf, sizeof buf, "| %s | %zu | n/a | n/a | n/a | n/a | n/a | n/a |\n",
                  std::string(direction_name(direction)).c_str(), rows.size());
  }
  return out + buf;
}

EvalReport evaluate_testset(const ModelBundle<float>& bundle, const DatasetManifest& manifest, Direction direction,
                            ForcedAttention forced, std::ostream* log) {
  const Domain domain = direction == Direction::x2y ? Domain::x : Domain::y;
  const auto& paths = manifest.split(domain, false);
  if (paths.empty()) {
    throw MetricError(manifest.root.string() + ": test split for " + std::string(direction_name(direction)) + " is empty");
  }
  const bool masks = manifest.has_masks(domain);
  if (!masks && log) {
    *log << "notice: no masks for the source domain; psnr_bg, ssim_bg and attn_iou are skipped\n";
  }
  const Index size = bundle.a_x.architecture().image_size;
  EvalReport report;
  report.direction = direction;
  for (const auto& path : paths) {
    Prng unused(0);
    const Sample s = augment(load_sample(manifest, domain, path, masks), unused, false, size);
    const auto t = direction == Direction::x2y ? map_g(bundle, s.image, forced) : map_f(bundle, s.image, forced);
    EvalRow row{s.id, std::nullopt, std::nullopt, std::nullopt};
    if (masks) {
      const Image8 original = tensor_to_image(s.image);
      const Image8 generated = tensor_to_image(t.output);
      row.psnr_bg = psnr_background(original, generated, s.mask);
      row.ssim_bg = ssim_background(original, generated, s.mask);
      row.attn_iou = attention_iou(t.attention, s.mask);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace agan
