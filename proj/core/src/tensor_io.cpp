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

#include "pcda/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcda/error.hpp"

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

namespace pcda {
namespace {

constexpr char kMagic[8] = {'P', 'C', 'D', 'A', 'P', 'R', 'M', '1'};

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : module.named_parameters(true)) out.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) out.emplace_back(b.key(), b.value());
  return out;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ArtifactError("truncated parameter blob " + path.string());
  }
  return v;
}

}  // namespace

void save_parameters(const torch::nn::Module& module, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  const auto state = named_state(module);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(os, d);
    auto flat = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    os.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
             static_cast<std::streamsize>(flat.numel() * sizeof(float)));
  }
  if (!os) throw Error("write failed for " + path.string());
}

void load_parameters(torch::nn::Module& module, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("missing parameter blob " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ArtifactError("not a parameter blob: " + path.string());
  }
  auto state = named_state(module);
  const auto count = get<std::uint32_t>(is, path);
  if (count != state.size()) {
    throw ArtifactError("parameter count mismatch in " + path.string());
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : state) {
    const auto len = get<std::uint32_t>(is, path);
    std::string stored(len, '\0');
    is.read(stored.data(), len);
    if (stored != name) throw ArtifactError("parameter name mismatch: expected " + name + ", got " + stored);
    const auto ndim = get<std::uint32_t>(is, path);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = get<std::int64_t>(is, path);
    if (dims != t.sizes().vec()) throw ArtifactError("shape mismatch for parameter " + name);
    auto buf = torch::empty(dims, torch::kFloat32);
    if (!is.read(reinterpret_cast<char*>(buf.data_ptr<float>()),
                 static_cast<std::streamsize>(buf.numel() * sizeof(float)))) {
      throw ArtifactError("truncated parameter blob " + path.string());
    }
    t.copy_(buf.to(t.dtype()));
  }
}

std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& [name, t] : named_state(module)) out.push_back(t.detach().clone());
  return out;
}

void restore_parameters(torch::nn::Module& module, const std::vector<torch::Tensor>& snapshot) {
  auto state = named_state(module);
  if (state.size() != snapshot.size()) throw InvalidInput("snapshot does not match module");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < state.size(); ++i) state[i].second.copy_(snapshot[i]);
}

bool parameters_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].sizes().equals(b[i].sizes()) || !torch::equal(a[i], b[i])) return false;
  }
  return true;
}

void write_f32_matrix(const std::filesystem::path& path, const torch::Tensor& matrix) {
  auto flat = matrix.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
           static_cast<std::streamsize>(flat.numel() * sizeof(float)));
}

torch::Tensor read_f32_matrix(const std::filesystem::path& path, std::int64_t rows, std::int64_t cols) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw ArtifactError("missing matrix file " + path.string());
  const auto bytes = static_cast<std::int64_t>(is.tellg());
  if (bytes != rows * cols * static_cast<std::int64_t>(sizeof(float))) {
    throw ArtifactError("matrix file size does not match sidecar shape: " + path.string());
  }
  is.seekg(0);
  auto out = torch::empty({rows, cols}, torch::kFloat32);
  is.read(reinterpret_cast<char*>(out.data_ptr<float>()), bytes);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("missing file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace pcda
