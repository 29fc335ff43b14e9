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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace pcda {

// H x W x 3 raster with channels in [0, 1], stored row-major (HWC).
class Image {
 public:
  Image() = default;
  Image(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  void fill(float r, float g, float b);

  // Quantized 8-bit RGB bytes, the form written to PNG.
  std::vector<std::uint8_t> to_rgb8() const;
  static Image from_rgb8(int height, int width, std::span<const std::uint8_t> rgb);

  // [3, H, W] float tensor and back. from_tensor clamps into [0, 1].
  torch::Tensor to_tensor() const;
  static Image from_tensor(const torch::Tensor& chw);

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * 3 + ch;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Stack images into a [N, 3, H, W] batch.
torch::Tensor stack_images(std::span<const Image> images);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace pcda
