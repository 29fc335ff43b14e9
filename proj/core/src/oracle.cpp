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

#include "pcda/oracle.hpp"

#include <cmath>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::datakit {
namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv(int in, int out, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor labels_of(const std::vector<SynthAttrSpec>& specs, int head) {
  std::vector<std::int64_t> v;
  v.reserve(specs.size());
  for (const auto& s : specs) {
    switch (head) {
      case 0: v.push_back(static_cast<int>(s.shape)); break;
      case 1: v.push_back(static_cast<int>(s.color)); break;
      case 2: v.push_back(static_cast<int>(s.size)); break;
      default: v.push_back(static_cast<int>(s.bg)); break;
    }
  }
  return torch::tensor(v, torch::kInt64);
}

}  // namespace

OracleTrunkImpl::OracleTrunkImpl() {
  conv1 = register_module("conv1", conv(3, 32, 1));
  conv2 = register_module("conv2", conv(32, 64, 2));
  conv3 = register_module("conv3", conv(64, 64, 1));
  conv4 = register_module("conv4", conv(64, 64, 2));
  conv5 = register_module("conv5", conv(64, 64, 1));
}

std::vector<torch::Tensor> OracleTrunkImpl::activations(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = F::leaky_relu(conv1(x - 0.5), F::LeakyReLUFuncOptions().negative_slope(0.1));
  out.push_back(h);
  h = F::leaky_relu(conv2(h), F::LeakyReLUFuncOptions().negative_slope(0.1));
  out.push_back(h);
  h = F::leaky_relu(conv3(h), F::LeakyReLUFuncOptions().negative_slope(0.1));
  out.push_back(h);
  h = F::leaky_relu(conv4(h), F::LeakyReLUFuncOptions().negative_slope(0.1));
  out.push_back(h);
  h = F::leaky_relu(conv5(h), F::LeakyReLUFuncOptions().negative_slope(0.1));
  out.push_back(h);
  return out;
}

torch::Tensor OracleTrunkImpl::forward(const torch::Tensor& x) {
  auto h = activations(x).back();
  return torch::cat({h.mean({2, 3}), h.amax({2, 3})}, 1);
}

AttributeOracleImpl::AttributeOracleImpl(int resolution_) : resolution(resolution_) {
  trunk = register_module("trunk", OracleTrunk());
  hidden = register_module("hidden", torch::nn::Linear(OracleTrunkImpl::kFeatureDim, 128));
  shape_head = register_module("shape_head", torch::nn::Linear(128, kNumShapes));
  color_head = register_module("color_head", torch::nn::Linear(128, kNumColors));
  size_head = register_module("size_head", torch::nn::Linear(128, kNumSizes));
  bg_head = register_module("bg_head", torch::nn::Linear(128, kNumBackgrounds));
}

AttributeLogits AttributeOracleImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(hidden(trunk(x)));
  return {shape_head(h), color_head(h), size_head(h), bg_head(h)};
}

AttributeOracle train_attribute_oracle(const DatasetManifest& manifest, const OracleConfig& config,
                                       std::uint64_t seed, OracleReport* report) {
  std::vector<SynthAttrSpec> specs;
  std::vector<Image> images;
  for (const auto& id : manifest.image_ids(Split::kTrain)) {
    const PairRecord* rec = nullptr;
    for (const auto& p : manifest.pairs) {
      if (p.image_id == id) {
        rec = &p;
        break;
      }
    }
    if (rec == nullptr || !rec->attrs) throw InvalidInput("oracle training needs a synthetic dataset with attrs");
    specs.push_back(*rec->attrs);
    images.push_back(manifest.load_image(id));
  }
  Rng render_rng = make_rng(seed, "oracle/extra_renders");
  for (const auto& s : sample_specs(config.extra_renders, manifest.resolution, render_rng)) {
    specs.push_back(s);
    images.push_back(render_synthetic(s, manifest.resolution));
  }

  torch::manual_seed(derive_seed(seed, "oracle/init"));
  AttributeOracle oracle(manifest.resolution);
  torch::optim::Adam opt(oracle->parameters(), torch::optim::AdamOptions(config.lr));
  const auto x_all = stack_images(images);
  const std::array<torch::Tensor, 4> y_all = {labels_of(specs, 0), labels_of(specs, 1), labels_of(specs, 2),
                                              labels_of(specs, 3)};
  const auto n = static_cast<std::int64_t>(specs.size());
  auto gen = make_torch_generator(derive_seed(seed, "oracle/shuffle"));
  oracle->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Cosine decay to zero over the run.
    const double lr = 0.5 * config.lr * (1.0 + std::cos(M_PI * epoch / config.epochs));
    for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
    auto perm = torch::randperm(n, gen, torch::kInt64);
    double total = 0.0;
    int batches = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      auto idx = perm.slice(0, start, std::min(n, start + config.batch_size));
      auto logits = oracle->forward(x_all.index_select(0, idx));
      auto loss = F::cross_entropy(logits.shape, y_all[0].index_select(0, idx)) +
                  F::cross_entropy(logits.color, y_all[1].index_select(0, idx)) +
                  F::cross_entropy(logits.size, y_all[2].index_select(0, idx)) +
                  F::cross_entropy(logits.bg, y_all[3].index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    if (report) report->epoch_loss.push_back(total / std::max(1, batches));
  }
  oracle->eval();
  if (report) report->train_accuracy = evaluate_oracle(oracle, specs, manifest.resolution).all;
  return oracle;
}

std::vector<Attributes> predict_attributes(AttributeOracle& oracle, const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(2) != oracle->resolution || images.size(3) != oracle->resolution) {
    throw InvalidInput("oracle expects [N, 3, " + std::to_string(oracle->resolution) + ", " +
                       std::to_string(oracle->resolution) + "] images");
  }
  torch::NoGradGuard no_grad;
  std::vector<Attributes> out;
  const auto n = images.size(0);
  for (std::int64_t start = 0; start < n; start += 256) {
    auto logits = oracle->forward(images.slice(0, start, std::min(n, start + 256)).to(torch::kFloat32));
    auto s = logits.shape.argmax(1), c = logits.color.argmax(1), z = logits.size.argmax(1), b = logits.bg.argmax(1);
    for (std::int64_t i = 0; i < s.size(0); ++i) {
      out.push_back({static_cast<Shape>(s[i].item<std::int64_t>()), static_cast<Color>(c[i].item<std::int64_t>()),
                     static_cast<Size>(z[i].item<std::int64_t>()), static_cast<Background>(b[i].item<std::int64_t>())});
    }
  }
  return out;
}

Attributes attribute_oracle(AttributeOracle& oracle, const Image& image) {
  if (image.height() != oracle->resolution || image.width() != oracle->resolution) {
    throw InvalidInput("oracle resolution mismatch");
  }
  return predict_attributes(oracle, image.to_tensor().unsqueeze(0)).front();
}

OracleAccuracy evaluate_oracle(AttributeOracle& oracle, const std::vector<SynthAttrSpec>& specs, int resolution) {
  std::vector<Image> images;
  images.reserve(specs.size());
  for (const auto& s : specs) images.push_back(render_synthetic(s, resolution));
  const auto pred = predict_attributes(oracle, stack_images(images));
  OracleAccuracy acc;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto truth = specs[i].attributes();
    acc.shape += pred[i].shape == truth.shape;
    acc.color += pred[i].color == truth.color;
    acc.size += pred[i].size == truth.size;
    acc.bg += pred[i].bg == truth.bg;
    acc.all += pred[i] == truth;
  }
  const double n = static_cast<double>(specs.size());
  acc.shape /= n;
  acc.color /= n;
  acc.size /= n;
  acc.bg /= n;
  acc.all /= n;
  return acc;
}

void save_oracle(AttributeOracle& oracle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_parameters(*oracle, dir / "oracle.bin");
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["resolution"] = oracle->resolution;
  write_text(dir / "oracle.json", j.dump(2) + "\n");
}

AttributeOracle load_oracle(const std::filesystem::path& dir) {
  auto j = nlohmann::json::parse(read_text(dir / "oracle.json"));
  AttributeOracle oracle(j.at("resolution").get<int>());
  load_parameters(*oracle, dir / "oracle.bin");
  oracle->eval();
  return oracle;
}

}  // namespace pcda::datakit
