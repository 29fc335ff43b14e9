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
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pcda/datakit.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/oracle.hpp"

namespace pcda::projector {

// Center and spread of the style space: sigma2_w is the mean squared
// Euclidean distance of mapped samples to mu_w.
struct WStats {
  torch::Tensor mu_w;  // [d_w], float32
  double sigma2_w = 0.0;
  std::int64_t n_samples = 0;
};

using Mapper = std::function<torch::Tensor(const torch::Tensor&)>;

// Maps n standard-normal draws of dimension d_z and measures them. Throws
// InvalidInput when n < 2.
WStats estimate_w_stats(const Mapper& mapper, int d_z, std::int64_t n, std::uint64_t seed);
WStats estimate_w_stats(ganlite::GanModel& gan, std::int64_t n, std::uint64_t seed);
// Statistics of an explicit sample matrix [n, d_w].
WStats w_stats_of(const torch::Tensor& samples);

// How the second argument of the perturbation normal is read.
enum class NoiseScale {
  kVariance,  // per-coordinate variance = coeff * sigma_w * k^2
  kStddev,    // per-coordinate std = coeff * sigma_w * k^2
};

struct ProjectionConfig {
  int steps = 500;
  double lr = 0.1;
  double noise_coeff = 0.05;
  double noise_ramp = 0.75;  // fraction of steps over which k falls from 1 to 0
  double lr_rampdown = 0.25;
  double lr_rampup = 0.05;
  NoiseScale noise_scale = NoiseScale::kVariance;
  int batch_size = 32;  // images optimized side by side; each keeps its own w and noise stream

  // Noise annealing factor k(t): 1 at t = 0, linear to 0 at noise_ramp * steps, then 0.
  double anneal(int step) const;
  // Step size at t: cosine ramp-down over the last lr_rampdown fraction, linear warm-up over lr_rampup.
  double lr_at(int step) const;
};

// w + g with g ~ N(0, s^2) per coordinate, s derived from k, sigma2_w and the
// configured reading of the noise scale. k = 0 or sigma2_w = 0 returns w
// unchanged. Throws InvalidInput for k outside [0, 1] or negative sigma2_w.
torch::Tensor perturb_latent(const torch::Tensor& w, double k, const WStats& stats, at::Generator& gen,
                             double noise_coeff = 0.05, NoiseScale scale = NoiseScale::kVariance);

// Fixed differentiable feature network F used by the perceptual loss.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;
  // [N, 3, H, W] -> [N, D]; differentiable in its input.
  virtual torch::Tensor features(const torch::Tensor& images) = 0;
};

// Multi-layer activations of the (trained, frozen) attribute-oracle trunk.
class OracleTrunkExtractor : public PerceptualExtractor {
 public:
  explicit OracleTrunkExtractor(datakit::OracleTrunk trunk);
  torch::Tensor features(const torch::Tensor& images) override;

 private:
  datakit::OracleTrunk trunk_;
};

// Randomly initialized frozen conv net (3x3 convs, stride 2 after the first
// layer, leaky ReLU), all layer activations concatenated.
class RandomConvExtractor : public PerceptualExtractor {
 public:
  RandomConvExtractor(int layers, int channels, std::uint64_t seed, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor features(const torch::Tensor& images) override;

 private:
  torch::nn::ModuleList convs_;
};

// ||F(x) - F(x')||^2 per sample ([N]) and summed over the batch (scalar).
// Throws InvalidInput on a shape mismatch.
torch::Tensor perceptual_loss_per_sample(PerceptualExtractor& extractor, const torch::Tensor& x,
                                         const torch::Tensor& x_prime);
torch::Tensor perceptual_loss(PerceptualExtractor& extractor, const torch::Tensor& x, const torch::Tensor& x_prime);

struct ProjectionResult {
  torch::Tensor w_opt;        // [d_w]
  std::vector<double> trace;  // L(mu_w), then one entry per step, then L(w_final) when steps > 0
  double initial_loss = 0.0;  // L(mu_w)
  double final_loss = 0.0;    // noise-free L(w_opt)
};

// Adam descent on w from mu_w, evaluating the loss at G(perturb(w, k(t))).
// Returns the w with the lowest recorded loss. Throws NumericalError when the
// loss turns non-finite.
ProjectionResult project_image(ganlite::GanModel& gan, PerceptualExtractor& extractor, const WStats& stats,
                               const torch::Tensor& image, const ProjectionConfig& cfg, std::uint64_t seed);
// Independent projections of a [N, 3, H, W] batch with one seed per image.
std::vector<ProjectionResult> project_batch(ganlite::GanModel& gan, PerceptualExtractor& extractor,
                                            const WStats& stats, const torch::Tensor& images,
                                            const ProjectionConfig& cfg, const std::vector<std::uint64_t>& seeds);

// Projected codes of the training images, row-aligned with `ids`.
struct LatentStore {
  std::vector<std::string> ids;
  torch::Tensor w;  // [N, d_w]
  std::vector<double> initial_losses;
  std::vector<double> final_losses;
  WStats stats;

  std::int64_t rows() const { return static_cast<std::int64_t>(ids.size()); }
  // Row of an image id; throws InvalidInput when absent.
  std::int64_t row_of(const std::string& id) const;
};

// Writes latents.f32 + latents.json (+ mu_w.f32) into dir.
void save_latent_store(const LatentStore& store, const std::filesystem::path& dir);
// Validates per-row checksums; throws ArtifactError naming the first corrupt row.
LatentStore load_latent_store(const std::filesystem::path& dir);
bool latent_store_exists(const std::filesystem::path& dir);

// Projects every training image not already in out_dir's store, persisting
// after each batch so an interrupted run resumes by id.
LatentStore project_dataset(ganlite::GanModel& gan, PerceptualExtractor& extractor,
                            const datakit::DatasetManifest& manifest, const WStats& stats,
                            const ProjectionConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                            const std::function<void(std::size_t done, std::size_t total)>& progress = {});

}  // namespace pcda::projector
