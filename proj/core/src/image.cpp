// Copyright 2026 The pcda Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pcda/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "pcda/error.hpp"

namespace pcda {

Image::Image(int height, int width)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * 3, 0.0f) {
  if (height <= 0 || width <= 0) throw InvalidInput("image dimensions must be positive");
}

void Image::fill(float r, float g, float b) {
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = r;
    data_[i + 1] = g;
    data_[i + 2] = b;
  }
}

std::vector<std::uint8_t> Image::to_rgb8() const {
  std::vector<std::uint8_t> out(data_.size());
  std::transform(data_.begin(), data_.end(), out.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  return out;
}

Image Image::from_rgb8(int height, int width, std::span<const std::uint8_t> rgb) {
  Image img(height, width);
  if (rgb.size() != img.data_.size()) throw InvalidInput("rgb buffer size mismatch");
  std::transform(rgb.begin(), rgb.end(), img.data_.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return img;
}

torch::Tensor Image::to_tensor() const {
  auto hwc = torch::from_blob(const_cast<float*>(data_.data()), {height_, width_, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous().clone();
}

Image Image::from_tensor(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw InvalidInput("expected a [3, H, W] tensor");
  auto hwc = chw.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  Image img(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::copy_n(hwc.data_ptr<float>(), img.data_.size(), img.data_.begin());
  return img;
}

torch::Tensor stack_images(std::span<const Image> images) {
  if (images.empty()) throw InvalidInput("stack_images: empty batch");
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto& im : images) ts.push_back(im.to_tensor());
  return torch::stack(ts);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  const auto rgb = image.to_rgb8();
  if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw Error("png write failed for " + path.string() + ": " + png.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ValidationError(ValidationError::Kind::kMissingFile,
                          "cannot read png " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    throw ValidationError(ValidationError::Kind::kSchema, "png decode failed for " + path.string());
  }
  return Image::from_rgb8(static_cast<int>(png.height), static_cast<int>(png.width), rgb);
}

}  // namespace pcda
