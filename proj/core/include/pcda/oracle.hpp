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

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "pcda/datakit.hpp"

namespace pcda::datakit {

// Convolutional trunk shared by the attribute heads and, frozen, by the
// projector's perceptual loss.
struct OracleTrunkImpl : torch::nn::Module {
  OracleTrunkImpl();
  // Activations after each conv block, for images in [0, 1].
  std::vector<torch::Tensor> activations(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);  // pooled feature vector

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, conv4{nullptr}, conv5{nullptr};
  static constexpr int kFeatureDim = 128;
};
TORCH_MODULE(OracleTrunk);

struct AttributeLogits {
  torch::Tensor shape, color, size, bg;
};

struct AttributeOracleImpl : torch::nn::Module {
  explicit AttributeOracleImpl(int resolution);
  AttributeLogits forward(const torch::Tensor& x);

  int resolution;
  OracleTrunk trunk{nullptr};
  torch::nn::Linear hidden{nullptr};
  torch::nn::Linear shape_head{nullptr}, color_head{nullptr}, size_head{nullptr}, bg_head{nullptr};
};
TORCH_MODULE(AttributeOracle);

struct OracleConfig {
  int epochs = 15;
  int batch_size = 64;
  double lr = 2e-3;
  int extra_renders = 4000;  // fresh clean renders added to the training split
};

struct OracleReport {
  double train_accuracy = 0.0;  // all four attributes correct
  std::vector<double> epoch_loss;
};

// Trains a fresh oracle on the dataset's training images plus extra renders.
// Throws InvalidInput when the dataset carries no attribute records.
AttributeOracle train_attribute_oracle(const DatasetManifest& manifest, const OracleConfig& config,
                                       std::uint64_t seed, OracleReport* report = nullptr);

// Predictions for a [N, 3, H, W] batch. Throws InvalidInput on a resolution
// mismatch.
std::vector<Attributes> predict_attributes(AttributeOracle& oracle, const torch::Tensor& images);
Attributes attribute_oracle(AttributeOracle& oracle, const Image& image);

// Fraction of exact attribute matches per head and jointly.
struct OracleAccuracy {
  double shape = 0, color = 0, size = 0, bg = 0, all = 0;
};
OracleAccuracy evaluate_oracle(AttributeOracle& oracle, const std::vector<SynthAttrSpec>& specs, int resolution);

void save_oracle(AttributeOracle& oracle, const std::filesystem::path& dir);
AttributeOracle load_oracle(const std::filesystem::path& dir);

}  // namespace pcda::datakit
