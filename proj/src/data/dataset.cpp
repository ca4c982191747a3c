#include "agan/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace agan {

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::map<std::string, fs::path> index_masks(const fs::path& dir, const std::vector<fs::path>& train,
                                            const std::vector<fs::path>& test) {
  std::map<std::string, fs::path> masks;
  const auto files = list_pngs(dir);
  if (files.empty()) return masks;
  std::map<std::string, int> image_stems;
  for (const auto* split : {&train, &test}) {
    for (const auto& p : *split) ++image_stems[p.stem().string()];
  }
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    const auto it = image_stems.find(stem);
    if (it == image_stems.end()) throw DataError(f.string() + ": mask has no image with the same stem");
    if (it->second > 1) throw DataError(f.string() + ": mask stem matches more than one image");
    masks.emplace(stem, f);
  }
  return masks;
}

}  // namespace

DatasetManifest DatasetManifest::load(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError(root.string() + ": dataset root is not a directory");
  DatasetManifest m;
  m.root = root;
  m.train_a = list_pngs(root / "trainA");
  m.train_b = list_pngs(root / "trainB");
  m.test_a = list_pngs(root / "testA");
  m.test_b = list_pngs(root / "testB");
  m.masks_a = index_masks(root / "masksA", m.train_a, m.test_a);
  m.masks_b = index_masks(root / "masksB", m.train_b, m.test_b);
  return m;
}

const std::vector<fs::path>& DatasetManifest::split(Domain domain, bool train) const {
  if (domain == Domain::x) return train ? train_a : test_a;
  return train ? train_b : test_b;
}

const std::map<std::string, fs::path>& DatasetManifest::masks(Domain domain) const {
  return domain == Domain::x ? masks_a : masks_b;
}

Sample load_sample(const DatasetManifest& manifest, Domain domain, const fs::path& image_path, bool with_mask) {
  Sample s;
  s.image = decode_image(image_path);
  s.domain = domain;
  s.source_path = image_path.string();
  s.id = image_path.stem().string();
  if (with_mask) {
    const auto& masks = manifest.masks(domain);
    const auto it = masks.find(s.id);
    if (it == masks.end()) throw DataError(image_path.string() + ": no mask for this image");
    s.mask = decode_mask(it->second);
    if (s.mask.dim(1) != s.image.dim(1) || s.mask.dim(2) != s.image.dim(2)) {
      throw DataError(it->second.string() + ": mask size differs from its image");
    }
  }
  return s;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, Index height, Index width) {
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image.clone();
  Buffer<float> out(c * height * width);
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (Index ch = 0; ch < c; ++ch) {
        const float* p = image.data().data() + ch * h * w;
        const double top = p[y0 * w + x0] * (1 - tx) + p[y0 * w + x1] * tx;
        const double bottom = p[y1 * w + x0] * (1 - tx) + p[y1 * w + x1] * tx;
        out[(ch * height + y) * width + x] = static_cast<float>(top * (1 - ty) + bottom * ty);
      }
    }
  }
  return Tensor<float>::from_buffer({c, height, width}, std::move(out));
}

Tensor<float> resize_nearest(const Tensor<float>& image, Index height, Index width) {
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image.clone();
  Buffer<float> out(c * height * width);
  for (Index y = 0; y < height; ++y) {
    const Index sy = std::min(h - 1, (y * h) / height);
    for (Index x = 0; x < width; ++x) {
      const Index sx = std::min(w - 1, (x * w) / width);
      for (Index ch = 0; ch < c; ++ch) out[(ch * height + y) * width + x] = image[(ch * h + sy) * w + sx];
    }
  }
  return Tensor<float>::from_buffer({c, height, width}, std::move(out));
}

Tensor<float> crop(const Tensor<float>& image, Index top, Index left, Index height, Index width) {
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (top < 0 || left < 0 || top + height > h || left + width > w) {
    throw DataError("crop: window exceeds image " + shape_string(image.shape()));
  }
  Buffer<float> out(c * height * width);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) out[(ch * height + y) * width + x] = image[(ch * h + top + y) * w + left + x];
  return Tensor<float>::from_buffer({c, height, width}, std::move(out));
}

Tensor<float> flip_horizontal(const Tensor<float>& image) {
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Buffer<float> out(image.numel());
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
  return Tensor<float>::from_buffer(image.shape(), std::move(out));
}

Index augment_scale(Index image_size) { return (image_size * 286 + 255) / 256; }

Sample augment(const Sample& sample, Prng& prng, bool train_mode, Index image_size) {
  Sample out = sample;
  const bool has_mask = sample.mask.defined();
  if (!train_mode) {
    out.image = resize_bilinear(sample.image, image_size, image_size);
    if (has_mask) out.mask = resize_nearest(sample.mask, image_size, image_size);
    return out;
  }
  const Index scaled = augment_scale(image_size);
  const Index top = static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(scaled - image_size + 1)));
  const Index left = static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(scaled - image_size + 1)));
  const bool flip = prng.bernoulli(0.5);
  out.image = crop(resize_bilinear(sample.image, scaled, scaled), top, left, image_size, image_size);
  if (flip) out.image = flip_horizontal(out.image);
  if (has_mask) {
    out.mask = crop(resize_nearest(sample.mask, scaled, scaled), top, left, image_size, image_size);
    if (flip) out.mask = flip_horizontal(out.mask);
  }
  return out;
}

}  // namespace agan
