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

#include "pcda/projector.hpp"

#include <cmath>
#include <set>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/hashing.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::projector {
namespace {

namespace F = torch::nn::functional;

torch::Tensor flatten_layers(const std::vector<torch::Tensor>& acts) {
  std::vector<torch::Tensor> parts;
  parts.reserve(acts.size());
  for (const auto& a : acts) {
    auto flat = a.flatten(1);
    parts.push_back(flat / std::sqrt(static_cast<double>(flat.size(1))));
  }
  return torch::cat(parts, 1);
}

std::string row_checksum(const torch::Tensor& row) {
  auto r = row.to(torch::kFloat32).contiguous();
  return sha256_hex(std::span<const std::byte>(reinterpret_cast<const std::byte*>(r.data_ptr<float>()),
                                               static_cast<std::size_t>(r.numel()) * sizeof(float)))
      .substr(0, 16);
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistics

WStats w_stats_of(const torch::Tensor& samples) {
  if (samples.dim() != 2 || samples.size(0) < 2) throw InvalidInput("w statistics need at least two samples");
  auto s = samples.to(torch::kFloat64);
  auto mu = s.mean(0);
  WStats out;
  out.mu_w = mu.to(torch::kFloat32);
  out.sigma2_w = (s - mu).pow(2).sum(1).mean().item<double>();
  out.n_samples = samples.size(0);
  return out;
}

WStats estimate_w_stats(const Mapper& mapper, int d_z, std::int64_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidInput("estimate_w_stats needs n >= 2");
  auto gen = make_torch_generator(derive_seed(seed, "projection/w_stats"));
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> chunks;
  for (std::int64_t done = 0; done < n; done += 1000) {
    const auto b = std::min<std::int64_t>(1000, n - done);
    chunks.push_back(mapper(torch::randn({b, d_z}, gen, torch::kFloat32)));
  }
  return w_stats_of(torch::cat(chunks, 0));
}

WStats estimate_w_stats(ganlite::GanModel& gan, std::int64_t n, std::uint64_t seed) {
  return estimate_w_stats([&](const torch::Tensor& z) { return gan->mapping(z); }, gan->config.d_z, n, seed);
}

// ---------------------------------------------------------------------------
// Schedules and perturbation

double ProjectionConfig::anneal(int step) const {
  if (steps <= 0 || step <= 0) return 1.0;
  const double t = static_cast<double>(step) / (noise_ramp * steps);
  return std::max(0.0, 1.0 - t);
}

double ProjectionConfig::lr_at(int step) const {
  if (steps <= 0) return lr;
  const double t = static_cast<double>(step) / steps;
  double ramp = std::min(1.0, (1.0 - t) / lr_rampdown);
  ramp = 0.5 - 0.5 * std::cos(ramp * std::numbers::pi);
  ramp *= std::min(1.0, t / lr_rampup);
  return lr * ramp;
}

namespace {

double noise_std(double k, double sigma2_w, double coeff, NoiseScale scale) {
  const double sigma_w = std::sqrt(sigma2_w);
  if (scale == NoiseScale::kVariance) return std::sqrt(coeff * sigma_w) * k;
  return coeff * sigma_w * k * k;
}

}  // namespace

torch::Tensor perturb_latent(const torch::Tensor& w, double k, const WStats& stats, at::Generator& gen,
                             double noise_coeff, NoiseScale scale) {
  if (!(k >= 0.0 && k <= 1.0)) throw InvalidInput("perturb_latent: k must lie in [0, 1]");
  if (stats.sigma2_w < 0.0) throw InvalidInput("perturb_latent: negative sigma2_w");
  const double s = noise_std(k, stats.sigma2_w, noise_coeff, scale);
  if (s == 0.0) return w;
  return w + s * torch::randn(w.sizes(), gen, w.options().requires_grad(false));
}

// ---------------------------------------------------------------------------
// Perceptual features

OracleTrunkExtractor::OracleTrunkExtractor(datakit::OracleTrunk trunk) : trunk_(std::move(trunk)) {
  trunk_->eval();
  for (auto& p : trunk_->parameters()) p.set_requires_grad(false);
}

torch::Tensor OracleTrunkExtractor::features(const torch::Tensor& images) {
  return flatten_layers(trunk_->activations(images));
}

RandomConvExtractor::RandomConvExtractor(int layers, int channels, std::uint64_t seed, torch::Dtype dtype) {
  torch::manual_seed(derive_seed(seed, "projection/random_extractor"));
  for (int i = 0; i < layers; ++i) {
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(i == 0 ? 3 : channels, channels, 3).stride(i == 0 ? 1 : 2).padding(1));
    conv->to(dtype);
    for (auto& p : conv->parameters()) p.set_requires_grad(false);
    convs_->push_back(conv);
  }
}

torch::Tensor RandomConvExtractor::features(const torch::Tensor& images) {
  std::vector<torch::Tensor> acts;
  auto h = images - 0.5;
  for (const auto& m : *convs_) {
    h = F::leaky_relu(m->as<torch::nn::Conv2dImpl>()->forward(h), F::LeakyReLUFuncOptions().negative_slope(0.1));
    acts.push_back(h);
  }
  return flatten_layers(acts);
}

torch::Tensor perceptual_loss_per_sample(PerceptualExtractor& extractor, const torch::Tensor& x,
                                         const torch::Tensor& x_prime) {
  if (!x.sizes().equals(x_prime.sizes())) throw InvalidInput("perceptual_loss: image shapes differ");
  auto xx = x.dim() == 3 ? x.unsqueeze(0) : x;
  auto yy = x_prime.dim() == 3 ? x_prime.unsqueeze(0) : x_prime;
  return (extractor.features(xx) - extractor.features(yy)).pow(2).sum(1);
}

torch::Tensor perceptual_loss(PerceptualExtractor& extractor, const torch::Tensor& x, const torch::Tensor& x_prime) {
  return perceptual_loss_per_sample(extractor, x, x_prime).sum();
}

// ---------------------------------------------------------------------------
// Projection

std::vector<ProjectionResult> project_batch(ganlite::GanModel& gan, PerceptualExtractor& extractor,
                                            const WStats& stats, const torch::Tensor& images,
                                            const ProjectionConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  const auto res = gan->config.resolution;
  if (images.dim() != 4 || images.size(2) != res || images.size(3) != res) {
    throw InvalidInput("project: images must be [N, 3, " + std::to_string(res) + ", " + std::to_string(res) + "]");
  }
  const auto batch = images.size(0);
  if (static_cast<std::int64_t>(seeds.size()) != batch) throw InvalidInput("project: one seed per image required");
  const auto dtype = gan->synthesis->constant.scalar_type();

  std::vector<at::Generator> gens;
  for (auto s : seeds) gens.push_back(make_torch_generator(s));

  auto target = extractor.features(images.to(dtype)).detach();
  auto loss_of = [&](const torch::Tensor& w) {
    return (extractor.features(gan->synthesis(w)) - target).pow(2).sum(1);
  };

  auto w = stats.mu_w.to(dtype).unsqueeze(0).repeat({batch, 1}).contiguous();
  std::vector<ProjectionResult> results(batch);
  auto best_w = w.clone();
  std::vector<double> best(batch);
  {
    torch::NoGradGuard no_grad;
    auto init = loss_of(w);
    for (std::int64_t b = 0; b < batch; ++b) {
      results[b].initial_loss = init[b].item<double>();
      results[b].trace.push_back(results[b].initial_loss);
      best[b] = results[b].initial_loss;
    }
  }

  auto m = torch::zeros_like(w);
  auto v = torch::zeros_like(w);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  for (int t = 0; t < cfg.steps; ++t) {
    const double k = cfg.anneal(t);
    const double s = noise_std(k, stats.sigma2_w, cfg.noise_coeff, cfg.noise_scale);
    std::vector<torch::Tensor> noise;
    for (auto& g : gens) noise.push_back(torch::randn({w.size(1)}, g, w.options()));
    auto w_var = w.detach().requires_grad_(true);
    auto w_tilde = s == 0.0 ? w_var : w_var + s * torch::stack(noise);
    auto losses = loss_of(w_tilde);
    auto grad = torch::autograd::grad({losses.sum()}, {w_var})[0];
    for (std::int64_t b = 0; b < batch; ++b) {
      const double l = losses[b].item<double>();
      if (!std::isfinite(l)) {
        std::ostringstream msg;
        msg << "projection loss became non-finite at step " << t << "; trace tail:";
        for (std::size_t i = results[b].trace.size() > 5 ? results[b].trace.size() - 5 : 0; i < results[b].trace.size(); ++i) {
          msg << " " << results[b].trace[i];
        }
        throw NumericalError(msg.str());
      }
      results[b].trace.push_back(l);
      if (l < best[b]) {
        best[b] = l;
        best_w[b].copy_(w[b]);
      }
    }
    torch::NoGradGuard no_grad;
    m.mul_(kBeta1).add_(grad, 1.0 - kBeta1);
    v.mul_(kBeta2).addcmul_(grad, grad, 1.0 - kBeta2);
    const double bc1 = 1.0 - std::pow(kBeta1, t + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, t + 1);
    w = w - cfg.lr_at(t) * (m / bc1) / ((v / bc2).sqrt() + kEps);
  }

  torch::NoGradGuard no_grad;
  if (cfg.steps > 0) {
    auto final_losses = loss_of(w);
    for (std::int64_t b = 0; b < batch; ++b) {
      const double l = final_losses[b].item<double>();
      results[b].trace.push_back(l);
      if (l < best[b]) {
        best[b] = l;
        best_w[b].copy_(w[b]);
      }
    }
  }
  auto clean = loss_of(best_w);
  for (std::int64_t b = 0; b < batch; ++b) {
    results[b].w_opt = best_w[b].clone();
    results[b].final_loss = clean[b].item<double>();
  }
  return results;
}

ProjectionResult project_image(ganlite::GanModel& gan, PerceptualExtractor& extractor, const WStats& stats,
                               const torch::Tensor& image, const ProjectionConfig& cfg, std::uint64_t seed) {
  auto batch = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (batch.size(0) != 1) throw InvalidInput("project_image takes a single image");
  return project_batch(gan, extractor, stats, batch, cfg, {seed}).front();
}

// ---------------------------------------------------------------------------
// Latent store

std::int64_t LatentStore::row_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return static_cast<std::int64_t>(i);
  }
  throw InvalidInput("image " + id + " is not in the latent store");
}

bool latent_store_exists(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "latents.json"); }

void save_latent_store(const LatentStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto d_w = store.stats.mu_w.size(0);
  const auto w = store.rows() > 0 ? store.w.to(torch::kFloat32).contiguous() : torch::zeros({0, d_w});
  write_f32_matrix(dir / "latents.f32", w);
  write_f32_matrix(dir / "mu_w.f32", store.stats.mu_w.view({1, -1}));
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["d_w"] = d_w;
  j["rows"] = store.rows();
  j["ids"] = store.ids;
  j["initial_losses"] = store.initial_losses;
  j["final_losses"] = store.final_losses;
  nlohmann::ordered_json stats;
  stats["mu_w_path"] = "mu_w.f32";
  stats["sigma2_w"] = store.stats.sigma2_w;
  stats["n_samples"] = store.stats.n_samples;
  j["stats"] = stats;
  std::vector<std::string> rows;
  for (std::int64_t i = 0; i < store.rows(); ++i) rows.push_back(row_checksum(w[i]));
  j["row_checksums"] = rows;
  j["checksum"] = sha256_file(dir / "latents.f32");
  write_text(dir / "latents.json", j.dump(2) + "\n");
}

LatentStore load_latent_store(const std::filesystem::path& dir) {
  if (!latent_store_exists(dir)) throw ArtifactError("no latent store in " + dir.string());
  auto j = nlohmann::json::parse(read_text(dir / "latents.json"));
  LatentStore s;
  const auto d_w = j.at("d_w").get<std::int64_t>();
  const auto rows = j.at("rows").get<std::int64_t>();
  s.ids = j.at("ids").get<std::vector<std::string>>();
  s.initial_losses = j.at("initial_losses").get<std::vector<double>>();
  s.final_losses = j.at("final_losses").get<std::vector<double>>();
  if (static_cast<std::int64_t>(s.ids.size()) != rows) throw ArtifactError("latent store id count mismatch");
  s.w = read_f32_matrix(dir / "latents.f32", rows, d_w);
  const auto checksums = j.at("row_checksums").get<std::vector<std::string>>();
  for (std::int64_t i = 0; i < rows; ++i) {
    if (row_checksum(s.w[i]) != checksums.at(i)) {
      throw ArtifactError("latent store row " + std::to_string(i) + " (" + s.ids[i] + ") fails its checksum");
    }
  }
  s.stats.mu_w = read_f32_matrix(dir / "mu_w.f32", 1, d_w).view({d_w});
  s.stats.sigma2_w = j.at("stats").at("sigma2_w").get<double>();
  s.stats.n_samples = j.at("stats").at("n_samples").get<std::int64_t>();
  return s;
}

LatentStore project_dataset(ganlite::GanModel& gan, PerceptualExtractor& extractor,
                            const datakit::DatasetManifest& manifest, const WStats& stats,
                            const ProjectionConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                            const std::function<void(std::size_t, std::size_t)>& progress) {
  const auto ids = manifest.image_ids(datakit::Split::kTrain);
  LatentStore store;
  if (latent_store_exists(out_dir)) {
    store = load_latent_store(out_dir);
  } else {
    store.w = torch::zeros({0, stats.mu_w.size(0)});
  }
  store.stats = stats;
  std::set<std::string> done(store.ids.begin(), store.ids.end());
  std::vector<std::string> todo;
  for (const auto& id : ids) {
    if (!done.count(id)) todo.push_back(id);
  }
  for (std::size_t start = 0; start < todo.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const auto end = std::min(todo.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<Image> images;
    std::vector<std::uint64_t> seeds;
    for (auto i = start; i < end; ++i) {
      images.push_back(manifest.load_image(todo[i]));
      seeds.push_back(derive_seed(seed, "projection/" + todo[i]));
    }
    auto results = project_batch(gan, extractor, stats, stack_images(images), cfg, seeds);
    std::vector<torch::Tensor> rows{store.w};
    for (std::size_t i = 0; i < results.size(); ++i) {
      store.ids.push_back(todo[start + i]);
      rows.push_back(results[i].w_opt.to(torch::kFloat32).unsqueeze(0));
      store.initial_losses.push_back(results[i].initial_loss);
      store.final_losses.push_back(results[i].final_loss);
    }
    store.w = torch::cat(rows, 0);
    save_latent_store(store, out_dir);
    if (progress) progress(store.ids.size(), ids.size());
  }
  if (todo.empty()) save_latent_store(store, out_dir);
  return store;
}

}  // namespace pcda::projector
