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


#include <benchmark/benchmark.h>

#include "pcda/augmentor.hpp"
#include "pcda/datakit.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/metrics.hpp"
#include "pcda/retriever.hpp"

namespace {

using namespace pcda;

void BM_RenderSynthetic(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  Rng rng = make_rng(1, "bench/render");
  const auto specs = datakit::sample_specs(64, res, rng);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(datakit::render_synthetic(specs[i++ % specs.size()], res));
}
BENCHMARK(BM_RenderSynthetic)->Arg(32)->Arg(64);

void BM_RecallAtK(benchmark::State& state) {
  const auto n = state.range(0);
  auto sim = evalkit::diagonal_matrix(torch::randn({n, n}, torch::kFloat64));
  for (auto _ : state) benchmark::DoNotOptimize(evalkit::recall_at_k(sim, 10));
}
BENCHMARK(BM_RecallAtK)->Arg(100)->Arg(1000);

void BM_RPrecision(benchmark::State& state) {
  const auto n = state.range(0);
  auto values = torch::randn({n, n}, torch::kFloat64);
  std::vector<int> cls(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = static_cast<int>(i % 24);
  for (auto _ : state) benchmark::DoNotOptimize(evalkit::r_precision(values, cls, cls));
}
BENCHMARK(BM_RPrecision)->Arg(1000);

void BM_PairwiseDistances(benchmark::State& state) {
  const auto n = state.range(0);
  auto a = torch::randn({n, 128}), b = torch::randn({n, 128});
  for (auto _ : state) benchmark::DoNotOptimize(retriever::pairwise_distances(a, b));
}
BENCHMARK(BM_PairwiseDistances)->Arg(64)->Arg(256);

void BM_BatchHardTriplet(benchmark::State& state) {
  const auto n = state.range(0);
  retriever::EmbeddingBatch b;
  b.f_img = torch::nn::functional::normalize(torch::randn({n, 128}),
                                             torch::nn::functional::NormalizeFuncOptions().dim(1));
  b.f_txt = torch::nn::functional::normalize(torch::randn({n, 128}),
                                             torch::nn::functional::NormalizeFuncOptions().dim(1));
  for (std::int64_t i = 0; i < n; ++i) b.img_pair.push_back(i);
  b.txt_pair = b.img_pair;
  b.img_class = b.txt_class = b.img_pair;
  for (auto _ : state) benchmark::DoNotOptimize(retriever::batch_hard_triplet_loss(b, {}));
}
BENCHMARK(BM_BatchHardTriplet)->Arg(32)->Arg(64);

void BM_ReplaceTokens(benchmark::State& state) {
  datakit::CaptionRecord c;
  c.caption_id = "c0";
  c.tokens = datakit::caption_tokens({datakit::Shape::kCross, datakit::Color::kBlue, datakit::Size::kSmall,
                                      datakit::Background::kGray});
  c.pos_tags = datakit::tag_pos(c.tokens, datakit::template_lexicon());
  const auto vocab = datakit::build_vocab({c});
  const auto pos = datakit::build_pos_vocab({c});
  augmentor::ReplacementConfig cfg{0.7, state.range(0) ? augmentor::Strategy::kPos : augmentor::Strategy::kRandom};
  Rng rng = make_rng(1, "bench/replace");
  for (auto _ : state) benchmark::DoNotOptimize(augmentor::replace_tokens(c, cfg, vocab, pos, rng));
}
BENCHMARK(BM_ReplaceTokens)->Arg(0)->Arg(1);

void BM_Synthesis(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  ganlite::GanConfig cfg;
  cfg.resolution = static_cast<int>(state.range(0));
  cfg.max_channels = 64;
  cfg.min_channels = 32;
  ganlite::GanModel gan(cfg, 1);
  auto w = torch::randn({16, cfg.d_w});
  for (auto _ : state) benchmark::DoNotOptimize(gan->synthesis(w));
}
BENCHMARK(BM_Synthesis)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GanTrainStep(benchmark::State& state) {
  ganlite::GanConfig cfg;
  cfg.resolution = 32;
  cfg.max_channels = 64;
  cfg.min_channels = 32;
  cfg.r1_interval = static_cast<int>(state.range(0));
  ganlite::GanTrainer trainer(ganlite::GanModel(cfg, 1), cfg, 1);
  auto reals = torch::rand({cfg.batch_size, 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(reals));
}
BENCHMARK(BM_GanTrainStep)->Arg(1)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  ganlite::GanConfig cfg;
  cfg.resolution = 32;
  cfg.max_channels = 64;
  cfg.min_channels = 32;
  ganlite::GanModel gan(cfg, 1);
  auto x = torch::rand({16, 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(gan->discriminator(x));
}
BENCHMARK(BM_DiscriminatorForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
