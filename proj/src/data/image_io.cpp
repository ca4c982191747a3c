#include "agan/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace agan {

Image8 read_png(const fs::path& path, Index channels) {
  if (channels != 1 && channels != 3) throw DataError("read_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError(path.string() + ": cannot decode PNG (" + image.message + ")");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw DataError(path.string() + ": only 8-bit images are supported");
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> interleaved(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, interleaved.data(), 0, nullptr)) {
    throw DataError(path.string() + ": corrupt PNG (" + image.message + ")");
  }
  Image8 out(channels, image.height, image.width);
  for (Index y = 0; y < out.height; ++y)
    for (Index x = 0; x < out.width; ++x)
      for (Index c = 0; c < channels; ++c)
        out.at(c, y, x) = interleaved[static_cast<std::size_t>((y * out.width + x) * channels + c)];
  return out;
}

void write_png(const Image8& img, const fs::path& path) {
  if (img.channels != 1 && img.channels != 3) throw DataError("write_png: channels must be 1 or 3");
  std::vector<std::uint8_t> interleaved(img.pixels.size());
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x)
      for (Index c = 0; c < img.channels; ++c)
        interleaved[static_cast<std::size_t>((y * img.width + x) * img.channels + c)] = img.at(c, y, x);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, interleaved.data(), 0, nullptr)) {
    throw DataError(path.string() + ": cannot write PNG (" + image.message + ")");
  }
}

Tensor<float> image_to_tensor(const Image8& image) {
  Buffer<float> data(static_cast<Index>(image.pixels.size()));
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    data[static_cast<Index>(i)] = static_cast<float>(image.pixels[i]) / 127.5f - 1.0f;
  }
  return Tensor<float>::from_buffer({image.channels, image.height, image.width}, std::move(data));
}

namespace {

std::uint8_t to_byte(double scaled) {
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(scaled), 0, 255));
}

Image8 tensor_planes(const Tensor<float>& t, const char* what) {
  if (t.rank() != 3) throw DataError(std::string(what) + ": expected a {C,H,W} tensor, got " + shape_string(t.shape()));
  return Image8(t.dim(0), t.dim(1), t.dim(2));
}

}  // namespace

Image8 tensor_to_image(const Tensor<float>& tensor) {
  Image8 out = tensor_planes(tensor, "tensor_to_image");
  for (Index i = 0; i < tensor.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(tensor[i]), -1.0, 1.0);
    out.pixels[static_cast<std::size_t>(i)] = to_byte((v + 1.0) * 127.5);
  }
  return out;
}

Image8 unit_map_to_image(const Tensor<float>& map) {
  Image8 out = tensor_planes(map, "unit_map_to_image");
  for (Index i = 0; i < map.numel(); ++i) {
    out.pixels[static_cast<std::size_t>(i)] = to_byte(std::clamp(static_cast<double>(map[i]), 0.0, 1.0) * 255.0);
  }
  return out;
}

Tensor<float> decode_image(const fs::path& path) { return image_to_tensor(read_png(path, 3)); }

void encode_image(const Tensor<float>& tensor, const fs::path& path) { write_png(tensor_to_image(tensor), path); }

Tensor<float> mask_from_image(const Image8& gray) {
  if (gray.channels != 1) throw DataError("mask_from_image: expected a single-channel image");
  Buffer<float> data(static_cast<Index>(gray.pixels.size()));
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) data[static_cast<Index>(i)] = gray.pixels[i] >= 128 ? 1.0f : 0.0f;
  return Tensor<float>::from_buffer({1, gray.height, gray.width}, std::move(data));
}

Tensor<float> decode_mask(const fs::path& path) { return mask_from_image(read_png(path, 1)); }

}  // namespace agan
