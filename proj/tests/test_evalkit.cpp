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


#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "pcda/error.hpp"
#include "pcda/evalkit.hpp"
#include "pcda/metrics.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::evalkit;

namespace {

torch::Tensor mat(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<torch::Tensor> out;
  for (auto r : rows) out.push_back(torch::tensor(std::vector<double>(r), torch::kFloat64));
  return torch::stack(out);
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("recall on a hand-ranked 3x3 matrix") {
  auto sim = diagonal_matrix(mat({{.9, .95, .2}, {.3, .8, .1}, {.6, .4, .5}}));
  CHECK(recall_at_k(sim, 1) == doctest::Approx(100.0 / 3).epsilon(1e-12));
  CHECK(recall_at_k(sim, 2) == 100.0);
  CHECK(recall_at_k(sim, 3) == 100.0);
}

TEST_CASE("diagonal dominant matrix scores 100 at k = 1") {
  auto sim = diagonal_matrix(mat({{1, .2, .1}, {.3, .9, .1}, {0, 0, .5}}));
  CHECK(recall_at_k(sim, 1) == 100.0);
}

TEST_CASE("recall ties go to the lower column") {
  // positive at column 1 ties with column 0; column 0 ranks first
  SimilarityMatrix s;
  s.values = mat({{.5, .5, .1}});
  s.positives = {{1}};
  CHECK(recall_at_k(s, 1) == 0.0);
  CHECK(recall_at_k(s, 2) == 100.0);
  s.positives = {{0}};
  CHECK(recall_at_k(s, 1) == 100.0);
}

TEST_CASE("recall rejects bad k and malformed matrices") {
  auto sim = diagonal_matrix(mat({{1, 0}, {0, 1}}));
  CHECK_THROWS_AS(recall_at_k(sim, 0), InvalidInput);
  CHECK_THROWS_AS(recall_at_k(sim, 3), InvalidInput);
  sim.positives[1].clear();
  CHECK_THROWS_AS(recall_at_k(sim, 1), InvalidInput);
  auto nan = diagonal_matrix(mat({{1, NAN}, {0, 1}}));
  CHECK_THROWS_AS(recall_at_k(nan, 1), InvalidInput);
}

TEST_CASE("r-precision by definition") {
  // query class 0 has R = 2; top-2 is (col 1: class 1, col 0: class 0)
  auto v = mat({{.8, .9, .1, .7}});
  CHECK(r_precision(v, {0}, {0, 1, 1, 0}) == doctest::Approx(50.0));
  // separable gallery
  auto w = mat({{.9, .8, .1, .2}, {.1, .2, .9, .8}});
  CHECK(r_precision(w, {0, 1}, {0, 0, 1, 1}) == 100.0);
  CHECK_THROWS_AS(r_precision(w, {0, 5}, {0, 0, 1, 1}), InvalidInput);
}

TEST_CASE("random 6x6 r-precision and recall match loop oracles") {
  Rng rng = make_rng(5, "metrics");
  for (int trial = 0; trial < 50; ++trial) {
    auto m = testing::random_matrix(rng, 6, 6);
    std::vector<int> cls(6);
    for (auto& c : cls) c = static_cast<int>(uniform_index(rng, 3));
    auto t = testing::to_tensor(m);
    CHECK(std::abs(r_precision(t, cls, cls) - testing::loop_r_precision(m, cls, cls)) < 1e-9);
    auto cm = class_matrix(t, cls, cls);
    for (int k = 1; k <= 6; ++k) CHECK(std::abs(recall_at_k(cm, k) - testing::loop_recall(m, cm.positives, k)) < 1e-9);
  }
}

TEST_CASE("planted embeddings give exactly 25 R@1") {
  // texts sit on the integers; the first 250 images sit on their partner,
  // the rest sit 0.4 from the previous text and 0.6 from their own
  const int n = 1000;
  EmbeddedSplit split;
  split.f_txt = torch::arange(n, torch::kFloat64).view({n, 1});
  split.f_img = split.f_txt.clone();
  split.f_img.slice(0, 250) -= 0.6;
  split.classes.assign(n, 0);
  ProtocolConfig cfg;
  cfg.n = n;
  cfg.repeats = 1;
  auto r = sampled_recall_protocol(split, cfg, 3);
  CHECK(r.i2t.r1 == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(r.i2t_stderr.r1 == 0.0);
  CHECK(r.notes.empty());
}

TEST_CASE("protocol repeats are seed-determined and n is clamped") {
  EmbeddedSplit split;
  auto g = make_torch_generator(4);
  split.f_img = torch::randn({40, 8}, g, torch::kFloat64);
  split.f_txt = split.f_img + 0.8 * torch::randn({40, 8}, g, torch::kFloat64);
  for (int i = 0; i < 40; ++i) split.classes.push_back(i % 5);
  ProtocolConfig cfg;
  cfg.n = 25;
  cfg.repeats = 4;
  auto a = sampled_recall_protocol(split, cfg, 9);
  auto b = sampled_recall_protocol(split, cfg, 9);
  REQUIRE(a.i2t_repeats.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(a.i2t_repeats[i].r1 == b.i2t_repeats[i].r1);
  CHECK(metrics_json(a) == metrics_json(b));

  cfg.n = 100;
  cfg.repeats = 1;
  auto c = sampled_recall_protocol(split, cfg, 9);
  CHECK(c.n == 40);
  CHECK(c.notes.size() == 1);

  cfg.level = retriever::Level::kClass;
  auto d = sampled_recall_protocol(split, cfg, 9);
  CHECK(d.protocol == "class");
  CHECK(d.i2t.rp.has_value());
}

TEST_CASE("report files: byte-stable json and one csv row per metric") {
  testing::TempDir dir("report");
  MetricsReport r;
  r.protocol = "instance";
  r.seed = 2;
  r.n = 10;
  r.repeats = 1;
  r.i2t = {12.5, 40, 60, std::nullopt};
  r.t2i = {10, 30, 50, std::nullopt};
  write_report(r, dir.path());
  const auto first = read_text(dir / "metrics.json");
  write_report(r, dir.path());
  CHECK(read_text(dir / "metrics.json") == first);
  auto csv = read_text(dir / "metrics.csv");
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(static_cast<std::size_t>(lines - 1) == metric_entry_count(r));
  CHECK(first.find("12.5000") != std::string::npos);
}

TEST_CASE("montage dimensions") {
  std::vector<std::vector<Image>> rows(4, std::vector<Image>(5, Image(8, 8)));
  auto m = montage(rows);
  CHECK(m.height() == 4 * 8 + 3 * 2);
  CHECK(m.width() == 5 * 8 + 4 * 2);
  rows[1].pop_back();
  CHECK_THROWS_AS(montage(rows), InvalidInput);
}

TEST_CASE("captions without a colour slot are excluded from colour coverage") {
  torch::manual_seed(0);
  datakit::AttributeOracle oracle(16);
  auto images = torch::rand({2, 3, 16, 16});
  auto s = semantic_consistency_score({{"a", "red", "circle"}, {"a", "circle"}}, images, oracle);
  CHECK(s.color.total == 2);
  CHECK(s.color.scored == 1);
  CHECK(s.shape.scored == 2);
}

}  // TEST_SUITE
