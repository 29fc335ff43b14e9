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
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "pcda/datakit.hpp"

namespace pcda::ganlite {

struct GanConfig {
  int resolution = 64;
  int d_z = 128;
  int d_w = 128;
  int mapping_layers = 4;
  int max_channels = 128;  // channels at 4x4 and 8x8; halved per doubling after that
  int min_channels = 32;
  int batch_size = 16;
  double lr = 2e-3;
  double mapping_lr_mult = 0.01;
  double r1_gamma = 1.0;
  int r1_interval = 4;  // lazy R1: penalty every n-th D step, scaled by n
  double ema_kimg = 5.0;  // half-life of the generator weight average, thousands of images; 0 = off
  int steps = 20000;
  int checkpoint_every = 1000;

  int channels_at(int res) const;
};

// Linear layer with runtime weight scaling (equalized learning rate).
struct EqLinearImpl : torch::nn::Module {
  EqLinearImpl(int in, int out, double bias_init = 0.0, double lr_mult = 1.0);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor weight, bias;
  double scale, lr_mult;
};
TORCH_MODULE(EqLinear);

struct EqConv2dImpl : torch::nn::Module {
  EqConv2dImpl(int in, int out, int kernel);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor weight, bias;
  double scale;
  int padding;
};
TORCH_MODULE(EqConv2d);

// z -> w. Zero layers gives the identity map (without normalization).
struct MappingNetworkImpl : torch::nn::Module {
  MappingNetworkImpl(int d_z, int d_w, int layers, double lr_mult);
  torch::Tensor forward(const torch::Tensor& z);
  torch::nn::ModuleList layers;
  int d_z, d_w;
};
TORCH_MODULE(MappingNetwork);

// 3x3 conv whose weights are scaled per input channel by an affine map of w.
struct ModulatedConvImpl : torch::nn::Module {
  ModulatedConvImpl(int d_w, int in, int out, int kernel, bool demodulate);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);
  EqLinear affine{nullptr};
  torch::Tensor weight;
  int in_channels, out_channels, kernel;
  bool demodulate;
};
TORCH_MODULE(ModulatedConv);

// Modulated conv + frozen per-pixel noise + bias + leaky ReLU.
struct StyleLayerImpl : torch::nn::Module {
  StyleLayerImpl(int d_w, int in, int out, int res, at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);
  ModulatedConv conv{nullptr};
  torch::Tensor noise, noise_strength, bias;
};
TORCH_MODULE(StyleLayer);

// 1x1 modulated conv to RGB, no demodulation.
struct ToRGBImpl : torch::nn::Module {
  ToRGBImpl(int d_w, int in);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);
  ModulatedConv conv{nullptr};
  torch::Tensor bias;
};
TORCH_MODULE(ToRGB);

struct SynthesisNetworkImpl : torch::nn::Module {
  SynthesisNetworkImpl(const GanConfig& config, at::Generator& gen);
  // One w per image, broadcast to every layer. Output in [0, 1].
  torch::Tensor forward(const torch::Tensor& w);
  torch::Tensor constant;
  torch::nn::ModuleList layers, to_rgb;
  int resolution, d_w;
};
TORCH_MODULE(SynthesisNetwork);

struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const GanConfig& config);
  torch::Tensor forward(const torch::Tensor& x);  // [N, 1] logits
  EqConv2d from_rgb{nullptr};
  torch::nn::ModuleList blocks;
  EqConv2d final_conv{nullptr};
  EqLinear fc{nullptr}, out{nullptr};
  int resolution;
};
TORCH_MODULE(Discriminator);

struct GanModelImpl : torch::nn::Module {
  GanModelImpl(const GanConfig& config, std::uint64_t seed);
  GanConfig config;
  MappingNetwork mapping{nullptr};
  SynthesisNetwork synthesis{nullptr};
  Discriminator discriminator{nullptr};
};
TORCH_MODULE(GanModel);

// w = MLP(z) for a [d_z] vector or a [N, d_z] batch. Throws InvalidInput on a
// dimension mismatch.
torch::Tensor map_latent(GanModel& gan, const torch::Tensor& z);
// Images [N, 3, H, W] for w of shape [N, d_w] (or [d_w] -> [1, 3, H, W]).
// Throws InvalidInput on non-finite w or a dimension mismatch.
torch::Tensor synthesize(GanModel& gan, const torch::Tensor& w);

// Mean over the batch of ||grad_x D(x)||^2.
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& discriminator,
                         const torch::Tensor& reals);

struct LossRecord {
  std::int64_t step = 0;
  double d_loss = 0, g_loss = 0, r1 = 0;
  double real_logit = 0, fake_logit = 0;
};

// Owns the optimizers and the loss history of one training run.
class GanTrainer {
 public:
  GanTrainer(GanModel model, const GanConfig& config, std::uint64_t seed);

  // One alternating D then G update on a [B, 3, R, R] batch.
  LossRecord step(const torch::Tensor& real_batch);

  GanModel& model() { return model_; }
  // Moving average of the generator weights (equal to model() when ema_kimg = 0).
  GanModel& ema_model() { return ema_; }
  // The averaged generator with the current discriminator, as saved by train_gan.
  GanModel export_model();
  std::int64_t steps_done() const { return step_; }
  const std::vector<LossRecord>& history() const { return history_; }

  void save_resume(const std::filesystem::path& dir) const;
  // Returns false when no resume state exists.
  bool load_resume(const std::filesystem::path& dir);

 private:
  void update_ema();

  GanModel model_;
  GanModel ema_;
  GanConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::int64_t step_ = 0;
  std::vector<LossRecord> history_;
};

LossRecord gan_train_step(GanTrainer& trainer, const torch::Tensor& real_batch);

// Full training loop over the manifest's training images. Periodic resume
// state goes to out_dir/resume; the final checkpoint to out_dir. An existing
// resume state is picked up and continued.
GanModel train_gan(const datakit::DatasetManifest& manifest, const GanConfig& config, std::uint64_t seed,
                   const std::filesystem::path& out_dir,
                   const std::function<void(const LossRecord&)>& on_step = {});

void save_gan(GanModel& gan, std::uint64_t seed, std::int64_t step, const std::filesystem::path& dir);
GanModel load_gan(const std::filesystem::path& dir);
void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path);
std::vector<LossRecord> read_loss_history(const std::filesystem::path& path);

}  // namespace pcda::ganlite
