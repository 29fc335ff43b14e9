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
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pcda {

// Parameter blob: every named parameter and buffer of a module as little-endian
// float32, in registration order. The byte stream depends only on the values,
// so equal parameters give byte-identical files.
void save_parameters(const torch::nn::Module& module, const std::filesystem::path& path);
void load_parameters(torch::nn::Module& module, const std::filesystem::path& path);

// In-memory copy of a module's parameters and buffers (for best-checkpoint
// tracking and "parameters unchanged" checks).
std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& module);
void restore_parameters(torch::nn::Module& module, const std::vector<torch::Tensor>& snapshot);
bool parameters_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b);

// Row-major float32 matrix file with no header; shape lives in a sidecar.
void write_f32_matrix(const std::filesystem::path& path, const torch::Tensor& matrix);
torch::Tensor read_f32_matrix(const std::filesystem::path& path, std::int64_t rows, std::int64_t cols);

// Text file helpers.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pcda
