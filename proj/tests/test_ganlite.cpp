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


#include "doctest.h"
#include "pcda/datakit.hpp"
#include "pcda/error.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::ganlite;

namespace {

GanConfig tiny() {
  GanConfig g;
  g.resolution = 8;
  g.d_z = g.d_w = 16;
  g.mapping_layers = 2;
  g.max_channels = g.min_channels = 8;
  g.batch_size = 4;
  g.steps = 4;
  return g;
}

}  // namespace

TEST_SUITE("ganlite") {

TEST_CASE("mapping and synthesis are deterministic and in range") {
  GanModel gan(tiny(), 1);
  auto z0 = torch::zeros({16});
  CHECK(torch::equal(map_latent(gan, z0), map_latent(gan, z0)));
  auto w = map_latent(gan, torch::randn({3, 16}));
  auto x = synthesize(gan, w);
  CHECK(x.sizes() == torch::IntArrayRef({3, 3, 8, 8}));
  CHECK(torch::equal(x, synthesize(gan, w)));
  CHECK(torch::isfinite(x).all().item<bool>());
  CHECK(x.min().item<double>() >= 0.0);
  CHECK(x.max().item<double>() <= 1.0);
  CHECK_THROWS_AS(synthesize(gan, torch::zeros({5})), InvalidInput);
  CHECK_THROWS_AS(map_latent(gan, torch::zeros({5})), InvalidInput);
}

TEST_CASE("same seed, same initialization") {
  GanModel a(tiny(), 3), b(tiny(), 3), c(tiny(), 4);
  CHECK(parameters_equal(snapshot_parameters(*a), snapshot_parameters(*b)));
  CHECK_FALSE(parameters_equal(snapshot_parameters(*a), snapshot_parameters(*c)));
}

TEST_CASE("R1 vanishes when the discriminator ignores its input") {
  auto reals = torch::rand({4, 3, 8, 8});
  auto constant = [](const torch::Tensor& x) { return torch::zeros({x.size(0), 1}) + 0.0 * x.sum() + 2.0; };
  CHECK(r1_penalty(constant, reals).item<double>() == 0.0);
  // linear critic: gradient is the weight, so the penalty is its squared norm
  auto wt = torch::full({3 * 8 * 8}, 0.5);
  auto linear = [&](const torch::Tensor& x) { return x.flatten(1).matmul(wt).unsqueeze(1); };
  CHECK(r1_penalty(linear, reals).item<double>() == doctest::Approx(0.25 * 192));
}

TEST_CASE("a step at lr 0 changes nothing") {
  auto cfg = tiny();
  cfg.lr = 0.0;
  GanModel gan(cfg, 5);
  auto before = snapshot_parameters(*gan);
  GanTrainer trainer(gan, cfg, 5);
  auto rec = gan_train_step(trainer, torch::rand({4, 3, 8, 8}));
  CHECK(parameters_equal(before, snapshot_parameters(*trainer.model())));
  CHECK(std::isfinite(rec.d_loss));
  CHECK_THROWS_AS(gan_train_step(trainer, torch::rand({4, 3, 16, 16})), InvalidInput);
}

TEST_CASE("train_gan: zero steps keeps init, seeded runs repeat, resume is exact") {
  testing::TempDir dir("gan");
  datakit::SynthConfig sc;
  sc.resolution = 8;
  sc.train = 12;
  sc.val = sc.test = 2;
  auto m = datakit::generate_synth_dataset(sc, 1, dir / "data");

  auto cfg = tiny();
  cfg.steps = 0;
  auto g0 = train_gan(m, cfg, 9, dir / "g0");
  CHECK(parameters_equal(snapshot_parameters(*g0), snapshot_parameters(*GanModel(cfg, 9))));

  cfg.steps = 4;
  train_gan(m, cfg, 9, dir / "ga");
  train_gan(m, cfg, 9, dir / "gb");
  CHECK(read_text(dir / "ga" / "loss_history.csv") == read_text(dir / "gb" / "loss_history.csv"));
  auto loaded = load_gan(dir / "ga");
  auto hist = read_loss_history(dir / "ga" / "loss_history.csv");
  REQUIRE(hist.size() == 4);
  CHECK(std::isfinite(hist.back().real_logit));
  CHECK((hist.back().real_logit != 0.0 && hist.back().fake_logit != 0.0));

  // interrupted run resumed from a checkpoint matches the straight run
  auto reals = torch::rand({4, 3, 8, 8});
  GanTrainer straight(GanModel(cfg, 2), cfg, 2);
  for (int i = 0; i < 4; ++i) straight.step(reals);
  GanTrainer first(GanModel(cfg, 2), cfg, 2);
  for (int i = 0; i < 2; ++i) first.step(reals);
  first.save_resume(dir / "resume");
  GanTrainer second(GanModel(cfg, 2), cfg, 2);
  REQUIRE(second.load_resume(dir / "resume"));
  CHECK(second.steps_done() == 2);
  for (int i = 0; i < 2; ++i) second.step(reals);
  CHECK(parameters_equal(snapshot_parameters(*straight.model()), snapshot_parameters(*second.model())));
  CHECK(parameters_equal(snapshot_parameters(*straight.ema_model()), snapshot_parameters(*second.ema_model())));
}

TEST_CASE("generator average") {
  auto reals = torch::rand({4, 3, 8, 8});
  auto cfg = tiny();
  cfg.ema_kimg = 0.0;
  GanTrainer off(GanModel(cfg, 3), cfg, 3);
  off.step(reals);
  off.step(reals);
  CHECK(parameters_equal(snapshot_parameters(*off.model()->synthesis),
                         snapshot_parameters(*off.ema_model()->synthesis)));

  cfg.ema_kimg = 5.0;
  GanTrainer on(GanModel(cfg, 3), cfg, 3);
  for (int i = 0; i < 3; ++i) on.step(reals);
  const auto before = snapshot_parameters(*on.ema_model()->synthesis);
  on.step(reals);
  const auto current = snapshot_parameters(*on.model()->synthesis);
  const auto after = snapshot_parameters(*on.ema_model()->synthesis);
  const double half_life = std::min(5000.0, 4.0 * cfg.batch_size * 0.05);
  const double beta = std::pow(0.5, cfg.batch_size / half_life);
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(torch::allclose(after[i], before[i] * beta + current[i] * (1.0 - beta), 1e-5, 1e-6));
  }
  CHECK_FALSE(parameters_equal(after, current));

  auto exported = on.export_model();
  CHECK(parameters_equal(snapshot_parameters(*exported->discriminator),
                         snapshot_parameters(*on.model()->discriminator)));
}

TEST_CASE("dataset and generator resolutions must agree") {
  testing::TempDir dir("gan_res");
  datakit::SynthConfig sc;
  sc.resolution = 16;
  sc.train = 2;
  sc.val = sc.test = 1;
  auto m = datakit::generate_synth_dataset(sc, 1, dir.path());
  CHECK_THROWS_AS(train_gan(m, tiny(), 1, dir / "g"), InvalidInput);
}

}  // TEST_SUITE
