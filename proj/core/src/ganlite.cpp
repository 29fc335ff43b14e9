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

#include "pcda/ganlite.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::ganlite {
namespace {

namespace F = torch::nn::functional;

const double kSqrt2 = std::sqrt(2.0);

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)) * kSqrt2; }

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

int GanConfig::channels_at(int res) const {
  int c = max_channels;
  for (int r = 16; r <= res; r *= 2) c /= 2;
  return std::max(c, min_channels);
}

// ---------------------------------------------------------------------------
// Layers

EqLinearImpl::EqLinearImpl(int in, int out, double bias_init, double lr_mult_)
    : scale(lr_mult_ / std::sqrt(static_cast<double>(in))), lr_mult(lr_mult_) {
  weight = register_parameter("weight", torch::randn({out, in}) / lr_mult_);
  bias = register_parameter("bias", torch::full({out}, bias_init));
}

torch::Tensor EqLinearImpl::forward(const torch::Tensor& x) {
  return torch::addmm(bias * lr_mult, x, (weight * scale).t());
}

EqConv2dImpl::EqConv2dImpl(int in, int out, int kernel)
    : scale(1.0 / std::sqrt(static_cast<double>(in * kernel * kernel))), padding(kernel / 2) {
  weight = register_parameter("weight", torch::randn({out, in, kernel, kernel}));
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqConv2dImpl::forward(const torch::Tensor& x) {
  return F::conv2d(x, weight * scale, F::Conv2dFuncOptions().bias(bias).padding(padding));
}

MappingNetworkImpl::MappingNetworkImpl(int d_z_, int d_w_, int n_layers, double lr_mult) : d_z(d_z_), d_w(d_w_) {
  if (n_layers == 0 && d_z != d_w) throw InvalidInput("an identity mapper needs d_z == d_w");
  layers = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < n_layers; ++i) {
    layers->push_back(EqLinear(i == 0 ? d_z : d_w, d_w, 0.0, lr_mult));
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) {
  if (layers->size() == 0) return z;
  auto x = z * torch::rsqrt(z.pow(2).mean(1, true) + 1e-8);
  for (const auto& layer : *layers) x = lrelu(layer->as<EqLinearImpl>()->forward(x));
  return x;
}

ModulatedConvImpl::ModulatedConvImpl(int d_w, int in, int out, int kernel_, bool demodulate_)
    : in_channels(in), out_channels(out), kernel(kernel_), demodulate(demodulate_) {
  affine = register_module("affine", EqLinear(d_w, in, 1.0));
  weight = register_parameter("weight", torch::randn({out, in, kernel, kernel}));
}

torch::Tensor ModulatedConvImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
  // Modulation folded into the activations instead of per-sample weights, so
  // the whole batch runs through one ordinary convolution.
  const auto batch = x.size(0);
  const auto styles = affine(w);  // [B, in]
  const auto wt = weight / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  auto y = F::conv2d(x * styles.view({batch, in_channels, 1, 1}), wt, F::Conv2dFuncOptions().padding(kernel / 2));
  if (demodulate) {
    const auto d = torch::rsqrt(torch::matmul(styles.pow(2), wt.pow(2).sum({2, 3}).t()) + 1e-8);  // [B, out]
    y = y * d.view({batch, out_channels, 1, 1});
  }
  return y;
}

StyleLayerImpl::StyleLayerImpl(int d_w, int in, int out, int res, at::Generator& gen) {
  conv = register_module("conv", ModulatedConv(d_w, in, out, 3, true));
  noise = register_buffer("noise", torch::randn({1, 1, res, res}, gen, torch::kFloat32));
  noise_strength = register_parameter("noise_strength", torch::zeros({1}));
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor StyleLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
  auto y = conv(x, w) + noise * noise_strength;
  return lrelu(y + bias.view({1, -1, 1, 1}));
}

ToRGBImpl::ToRGBImpl(int d_w, int in) {
  conv = register_module("conv", ModulatedConv(d_w, in, 3, 1, false));
  bias = register_parameter("bias", torch::zeros({3}));
}

torch::Tensor ToRGBImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
  return conv(x, w) + bias.view({1, 3, 1, 1});
}

SynthesisNetworkImpl::SynthesisNetworkImpl(const GanConfig& config, at::Generator& gen)
    : resolution(config.resolution), d_w(config.d_w) {
  if (resolution < 8 || !is_power_of_two(resolution)) throw InvalidInput("generator resolution must be 2^k >= 8");
  constant = register_parameter("constant", torch::randn({1, config.channels_at(4), 4, 4}));
  layers = register_module("layers", torch::nn::ModuleList());
  to_rgb = register_module("to_rgb", torch::nn::ModuleList());
  layers->push_back(StyleLayer(d_w, config.channels_at(4), config.channels_at(4), 4, gen));
  to_rgb->push_back(ToRGB(d_w, config.channels_at(4)));
  for (int res = 8; res <= resolution; res *= 2) {
    const int in = config.channels_at(res / 2);
    const int out = config.channels_at(res);
    layers->push_back(StyleLayer(d_w, in, out, res, gen));
    layers->push_back(StyleLayer(d_w, out, out, res, gen));
    to_rgb->push_back(ToRGB(d_w, out));
  }
}

torch::Tensor SynthesisNetworkImpl::forward(const torch::Tensor& w) {
  const auto batch = w.size(0);
  auto x = constant.expand({batch, -1, -1, -1});
  x = layers[0]->as<StyleLayerImpl>()->forward(x, w);
  auto rgb = to_rgb[0]->as<ToRGBImpl>()->forward(x, w);
  std::size_t li = 1;
  for (std::size_t ri = 1; ri < to_rgb->size(); ++ri) {
    x = upsample2x(x);
    x = layers[li++]->as<StyleLayerImpl>()->forward(x, w);
    x = layers[li++]->as<StyleLayerImpl>()->forward(x, w);
    rgb = upsample2x(rgb) + to_rgb[ri]->as<ToRGBImpl>()->forward(x, w);
  }
  return torch::sigmoid(rgb);
}

DiscriminatorImpl::DiscriminatorImpl(const GanConfig& config) : resolution(config.resolution) {
  from_rgb = register_module("from_rgb", EqConv2d(3, config.channels_at(resolution), 1));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int res = resolution; res >= 8; res /= 2) {
    blocks->push_back(EqConv2d(config.channels_at(res), config.channels_at(res), 3));
    blocks->push_back(EqConv2d(config.channels_at(res), config.channels_at(res / 2), 3));
  }
  const int c4 = config.channels_at(4);
  final_conv = register_module("final_conv", EqConv2d(c4 + 1, c4, 3));
  fc = register_module("fc", EqLinear(c4 * 16, c4));
  out = register_module("out", EqLinear(c4, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto h = lrelu(from_rgb(x * 2.0 - 1.0));
  for (std::size_t i = 0; i < blocks->size(); i += 2) {
    h = lrelu(blocks[i]->as<EqConv2dImpl>()->forward(h));
    h = lrelu(blocks[i + 1]->as<EqConv2dImpl>()->forward(h));
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
  }
  // minibatch standard deviation as one extra feature map
  auto centered = h - h.mean(0, true);
  auto stddev = torch::sqrt(centered.pow(2).mean(0) + 1e-8).mean();
  h = torch::cat({h, stddev.expand({h.size(0), 1, h.size(2), h.size(3)})}, 1);
  h = lrelu(final_conv(h));
  h = lrelu(fc(h.flatten(1)));
  return out(h);
}

GanModelImpl::GanModelImpl(const GanConfig& config_, std::uint64_t seed) : config(config_) {
  torch::manual_seed(derive_seed(seed, "gan/init"));
  auto noise_gen = make_torch_generator(derive_seed(seed, "gan/noise_buffers"));
  mapping = register_module("mapping", MappingNetwork(config.d_z, config.d_w, config.mapping_layers,
                                                      config.mapping_lr_mult));
  synthesis = register_module("synthesis", SynthesisNetwork(config, noise_gen));
  discriminator = register_module("discriminator", Discriminator(config));
}

// ---------------------------------------------------------------------------
// Inference

torch::Tensor map_latent(GanModel& gan, const torch::Tensor& z) {
  const bool single = z.dim() == 1;
  auto zz = single ? z.unsqueeze(0) : z;
  if (zz.dim() != 2 || zz.size(1) != gan->config.d_z) {
    throw InvalidInput("map_latent: expected z of dimension " + std::to_string(gan->config.d_z));
  }
  torch::NoGradGuard no_grad;
  auto w = gan->mapping(zz.to(torch::kFloat32));
  return single ? w.squeeze(0) : w;
}

torch::Tensor synthesize(GanModel& gan, const torch::Tensor& w) {
  auto ww = w.dim() == 1 ? w.unsqueeze(0) : w;
  if (ww.dim() != 2 || ww.size(1) != gan->config.d_w) {
    throw InvalidInput("synthesize: expected w of dimension " + std::to_string(gan->config.d_w));
  }
  if (!torch::isfinite(ww).all().item<bool>()) throw InvalidInput("synthesize: non-finite latent code");
  torch::NoGradGuard no_grad;
  return gan->synthesis(ww.to(torch::kFloat32));
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& discriminator,
                         const torch::Tensor& reals) {
  auto x = reals.detach().requires_grad_(true);
  auto logits = discriminator(x);
  auto grads = torch::autograd::grad({logits.sum()}, {x}, {}, /*retain_graph=*/true, /*create_graph=*/true,
                                     /*allow_unused=*/true);
  if (!grads[0].defined()) return torch::zeros({}, reals.options());
  return grads[0].pow(2).flatten(1).sum(1).mean();
}

// ---------------------------------------------------------------------------
// Training

GanTrainer::GanTrainer(GanModel model, const GanConfig& config, std::uint64_t seed)
    : model_(std::move(model)), ema_(model_->config, seed), config_(config), seed_(seed) {
  {
    torch::NoGradGuard no_grad;
    const auto src = model_->parameters();
    auto dst = ema_->parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
    const auto src_b = model_->buffers();
    auto dst_b = ema_->buffers();
    for (std::size_t i = 0; i < src_b.size(); ++i) dst_b[i].copy_(src_b[i]);
  }
  ema_->eval();
  std::vector<torch::Tensor> g_params;
  for (const auto& p : model_->mapping->parameters()) g_params.push_back(p);
  for (const auto& p : model_->synthesis->parameters()) g_params.push_back(p);
  const auto opts = torch::optim::AdamOptions(config.lr).betas({0.0, 0.99}).eps(1e-8);
  opt_g_ = std::make_unique<torch::optim::Adam>(g_params, opts);
  opt_d_ = std::make_unique<torch::optim::Adam>(model_->discriminator->parameters(), opts);
}

LossRecord GanTrainer::step(const torch::Tensor& real_batch) {
  if (real_batch.dim() != 4 || real_batch.size(2) != config_.resolution || real_batch.size(3) != config_.resolution) {
    throw InvalidInput("gan_train_step: real batch is not at resolution " + std::to_string(config_.resolution));
  }
  auto gen = make_torch_generator(derive_seed(seed_, "gan/step/" + std::to_string(step_)));
  const auto batch = real_batch.size(0);
  auto& m = *model_;
  LossRecord rec;
  rec.step = step_;

  // Discriminator update.
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = m.synthesis(m.mapping(torch::randn({batch, config_.d_z}, gen, torch::kFloat32)));
  }
  auto d_real = m.discriminator(real_batch);
  auto d_fake = m.discriminator(fake);
  auto d_loss = F::softplus(d_fake).mean() + F::softplus(-d_real).mean();
  auto d_total = d_loss;
  if (config_.r1_gamma > 0 && config_.r1_interval > 0 && step_ % config_.r1_interval == 0) {
    auto r1 = r1_penalty([&](const torch::Tensor& x) { return m.discriminator(x); }, real_batch);
    d_total = d_total + r1 * (0.5 * config_.r1_gamma * config_.r1_interval);
    rec.r1 = r1.item<double>();
  }
  opt_d_->zero_grad();
  d_total.backward();
  opt_d_->step();
  rec.d_loss = d_loss.item<double>();
  rec.real_logit = d_real.mean().item<double>();
  rec.fake_logit = d_fake.mean().item<double>();

  // Generator update.
  auto gen_images = m.synthesis(m.mapping(torch::randn({batch, config_.d_z}, gen, torch::kFloat32)));
  auto g_loss = F::softplus(-m.discriminator(gen_images)).mean();
  opt_g_->zero_grad();
  g_loss.backward();
  opt_g_->step();
  rec.g_loss = g_loss.item<double>();

  if (!std::isfinite(rec.d_loss) || !std::isfinite(rec.g_loss) || !std::isfinite(rec.r1)) {
    throw NumericalError("gan training diverged at step " + std::to_string(step_));
  }
  ++step_;
  update_ema();
  history_.push_back(rec);
  return rec;
}

void GanTrainer::update_ema() {
  torch::NoGradGuard no_grad;
  double beta = 0.0;
  if (config_.ema_kimg > 0) {
    // short runs ramp the half-life up with the number of images seen
    const double seen = static_cast<double>(step_) * config_.batch_size;
    const double half_life = std::min(config_.ema_kimg * 1000.0, seen * 0.05);
    beta = half_life > 0 ? std::pow(0.5, config_.batch_size / half_life) : 0.0;
  }
  auto lerp = [beta](const std::vector<torch::Tensor>& src, std::vector<torch::Tensor> dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].mul_(beta).add_(src[i], 1.0 - beta);
  };
  lerp(model_->mapping->parameters(), ema_->mapping->parameters());
  lerp(model_->synthesis->parameters(), ema_->synthesis->parameters());
}

GanModel GanTrainer::export_model() {
  torch::NoGradGuard no_grad;
  const auto src = model_->discriminator->parameters();
  auto dst = ema_->discriminator->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
  return ema_;
}

void GanTrainer::save_resume(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_parameters(*model_, dir / "model.bin");
  save_parameters(*ema_, dir / "ema.bin");
  torch::save(*opt_g_, (dir / "opt_g.pt").string());
  torch::save(*opt_d_, (dir / "opt_d.pt").string());
  write_loss_history(history_, dir / "loss_history.csv");
  nlohmann::ordered_json j;
  j["step"] = step_;
  write_text(dir / "state.json", j.dump(2) + "\n");
}

bool GanTrainer::load_resume(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "state.json")) return false;
  load_parameters(*model_, dir / "model.bin");
  load_parameters(*ema_, dir / "ema.bin");
  torch::load(*opt_g_, (dir / "opt_g.pt").string());
  torch::load(*opt_d_, (dir / "opt_d.pt").string());
  history_ = read_loss_history(dir / "loss_history.csv");
  step_ = nlohmann::json::parse(read_text(dir / "state.json")).at("step").get<std::int64_t>();
  return true;
}

LossRecord gan_train_step(GanTrainer& trainer, const torch::Tensor& real_batch) { return trainer.step(real_batch); }

GanModel train_gan(const datakit::DatasetManifest& manifest, const GanConfig& config, std::uint64_t seed,
                   const std::filesystem::path& out_dir, const std::function<void(const LossRecord&)>& on_step) {
  if (manifest.resolution != config.resolution) {
    throw InvalidInput("dataset resolution " + std::to_string(manifest.resolution) +
                       " does not match gan resolution " + std::to_string(config.resolution));
  }
  std::vector<Image> images;
  for (const auto& id : manifest.image_ids(datakit::Split::kTrain)) images.push_back(manifest.load_image(id));
  const auto reals = stack_images(images);
  const auto n = reals.size(0);

  GanTrainer trainer(GanModel(config, seed), config, seed);
  const auto resume_dir = out_dir / "resume";
  trainer.load_resume(resume_dir);
  for (std::int64_t step = trainer.steps_done(); step < config.steps; ++step) {
    auto gen = make_torch_generator(derive_seed(seed, "gan/batch/" + std::to_string(step)));
    auto idx = torch::randperm(n, gen, torch::kInt64).slice(0, 0, std::min<std::int64_t>(config.batch_size, n));
    const auto rec = trainer.step(reals.index_select(0, idx));
    if (on_step) on_step(rec);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 < config.steps) {
      trainer.save_resume(resume_dir);
    }
  }
  std::filesystem::create_directories(out_dir);
  auto gan = trainer.export_model();
  save_gan(gan, seed, trainer.steps_done(), out_dir);
  write_loss_history(trainer.history(), out_dir / "loss_history.csv");
  std::filesystem::remove_all(resume_dir);
  return gan;
}

void save_gan(GanModel& gan, std::uint64_t seed, std::int64_t step, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_parameters(*gan, dir / "gan.bin");
  const auto& c = gan->config;
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["resolution"] = c.resolution;
  j["d_z"] = c.d_z;
  j["d_w"] = c.d_w;
  j["step"] = step;
  j["seed"] = seed;
  j["loss_history_path"] = "loss_history.csv";
  j["mapping_layers"] = c.mapping_layers;
  j["max_channels"] = c.max_channels;
  j["min_channels"] = c.min_channels;
  j["mapping_lr_mult"] = c.mapping_lr_mult;
  write_text(dir / "gan.json", j.dump(2) + "\n");
}

GanModel load_gan(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "gan.json")) throw ArtifactError("missing gan checkpoint in " + dir.string());
  auto j = nlohmann::json::parse(read_text(dir / "gan.json"));
  GanConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.d_z = j.at("d_z").get<int>();
  c.d_w = j.at("d_w").get<int>();
  c.mapping_layers = j.at("mapping_layers").get<int>();
  c.max_channels = j.at("max_channels").get<int>();
  c.min_channels = j.at("min_channels").get<int>();
  c.mapping_lr_mult = j.at("mapping_lr_mult").get<double>();
  GanModel gan(c, 0);
  load_parameters(*gan, dir / "gan.bin");
  gan->eval();
  return gan;
}

void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "step,d_loss,g_loss,r1,real_logit,fake_logit\n";
  for (const auto& r : history) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.d_loss,
                  r.g_loss, r.r1, r.real_logit, r.fake_logit);
    os << buf;
  }
  write_text(path, os.str());
}

std::vector<LossRecord> read_loss_history(const std::filesystem::path& path) {
  std::istringstream is(read_text(path));
  std::string line;
  std::getline(is, line);  // header
  std::vector<LossRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LossRecord r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.d_loss, &r.g_loss, &r.r1, &r.real_logit,
                    &r.fake_logit) != 6) {
      throw ArtifactError("malformed loss history line in " + path.string());
    }
    r.step = step;
    out.push_back(r);
  }
  return out;
}

}  // namespace pcda::ganlite
