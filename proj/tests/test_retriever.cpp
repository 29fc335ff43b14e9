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
#include "pcda/datakit.hpp"
#include "pcda/error.hpp"
#include "pcda/retriever.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::retriever;

namespace {

EmbeddingBatch two_pair_batch(const torch::Tensor& e1, const torch::Tensor& e2) {
  EmbeddingBatch b;
  b.f_img = torch::stack({e1, e2});
  b.f_txt = torch::stack({e1, e2});
  b.img_pair = b.txt_pair = {0, 1};
  b.img_class = b.txt_class = {0, 1};
  return b;
}

}  // namespace

TEST_SUITE("retriever") {

TEST_CASE("pairwise distances") {
  auto a = torch::eye(3, torch::kFloat64);
  auto d = pairwise_distances(a, a);
  CHECK(d[0][0].item<double>() == 0.0);
  CHECK(d[0][1].item<double>() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(pairwise_distances(a, torch::eye(2)), InvalidInput);
  // zero distance keeps a finite gradient
  auto x = a.clone().requires_grad_(true);
  pairwise_distances(x, x).sum().backward();
  CHECK(torch::isfinite(x.grad()).all().item<bool>());
}

TEST_CASE("identical embeddings give exactly the margin") {
  auto e = torch::full({4}, 0.5, torch::kFloat64);
  auto b = two_pair_batch(e, e);
  CHECK(batch_hard_triplet_loss(b, {}).item<double>() == 0.3);
  CHECK(batch_hard_triplet_loss(b, {0.7}).item<double>() == doctest::Approx(0.7));
}

TEST_CASE("orthogonal pairs are already separated") {
  auto e = torch::eye(2, torch::kFloat64);
  CHECK(batch_hard_triplet_loss(two_pair_batch(e[0], e[1]), {}).item<double>() == 0.0);
}

TEST_CASE("mining matches exhaustive enumeration") {
  Rng rng = make_rng(2, "mining");
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<std::int64_t>(2 + uniform_index(rng, 7));
    const int labels = 2 + static_cast<int>(uniform_index(rng, n - 1));
    auto b = testing::random_batch(rng, n, 4, labels);
    const double got = batch_hard_triplet_loss(b, {}).item<double>();
    CHECK(std::abs(got - testing::loop_triplet(b, 0.3)) < 1e-6);
  }
}

TEST_CASE("swapping modalities wholesale leaves the loss unchanged") {
  Rng rng = make_rng(3, "swap");
  auto b = testing::random_batch(rng, 6, 5, 4);
  EmbeddingBatch s = b;
  std::swap(s.f_img, s.f_txt);
  std::swap(s.img_pair, s.txt_pair);
  std::swap(s.img_class, s.txt_class);
  CHECK(batch_hard_triplet_loss(b, {}).item<double>() ==
        doctest::Approx(batch_hard_triplet_loss(s, {}).item<double>()).epsilon(1e-12));
}

TEST_CASE("anchors without a partner are rejected unless skipped") {
  auto e = torch::eye(3, torch::kFloat64);
  EmbeddingBatch b;
  b.f_img = e.slice(0, 0, 2);
  b.f_txt = e.slice(0, 0, 3);
  b.img_pair = {0, 1};
  b.txt_pair = {0, 1, 2};
  b.img_class = b.img_pair;
  b.txt_class = b.txt_pair;
  CHECK_THROWS_AS(batch_hard_triplet_loss(b, {}), InvalidInput);
  TripletConfig skip;
  skip.skip_unpaired = true;
  CHECK(std::isfinite(batch_hard_triplet_loss(b, skip).item<double>()));
}

TEST_CASE("a batch with no negative has no valid anchor") {
  auto e = torch::eye(2, torch::kFloat64);
  EmbeddingBatch b;
  b.f_img = e.slice(0, 0, 1);
  b.f_txt = e.slice(0, 1, 2);
  b.img_pair = b.txt_pair = {0};
  b.img_class = b.txt_class = {0};
  CHECK_THROWS_AS(batch_hard_triplet_loss(b, {}), InvalidInput);
}

TEST_CASE("class level treats same-class rows as positives") {
  auto e = torch::eye(4, torch::kFloat64);
  EmbeddingBatch b;
  b.f_img = e.slice(0, 0, 2);
  b.f_txt = e.slice(0, 2, 4);
  b.img_pair = {0, 1};
  b.txt_pair = {2, 3};  // no instance-level partner anywhere
  b.img_class = {0, 1};
  b.txt_class = {0, 1};
  CHECK_THROWS_AS(batch_hard_triplet_loss(b, {}), InvalidInput);
  TripletConfig cls;
  cls.level = Level::kClass;
  // d_ap = d_an = sqrt 2 for every anchor
  CHECK(batch_hard_triplet_loss(b, cls).item<double>() == doctest::Approx(0.3));
}

TEST_CASE("encoders: unit rows, duplicate inputs give duplicate rows") {
  datakit::Vocabulary vocab({"a", "red", "circle"});
  auto enc = make_encoders(vocab, 16, {}, 4);
  enc.train(false);
  torch::NoGradGuard ng;
  auto px = torch::rand({1, 3, 16, 16}).repeat({2, 1, 1, 1});
  auto fi = embed_images(enc, px);
  CHECK(torch::equal(fi[0], fi[1]));
  CHECK(fi.norm(2, 1).sub(1).abs().max().item<double>() < 1e-5);
  auto ft = embed_texts(enc, {{"a", "red", "circle"}, {"a", "red", "circle"}, {"zzz"}});
  CHECK(torch::equal(ft[0], ft[1]));
  CHECK(ft.size(1) == 128);
}

TEST_CASE("mode names round trip") {
  for (auto m : {TrainMode::kJoint, TrainMode::kPretrainFinetune, TrainMode::kNoisePair, TrainMode::kTextOnly,
                 TrainMode::kUnpaired, TrainMode::kBaseline}) {
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(mode_from_name("bogus"), ConfigError);
}

TEST_CASE("config validation") {
  RetrievalConfig c;
  c.mode = TrainMode::kBaseline;
  CHECK_NOTHROW(c.validate(false));
  c.replacement.r = 0.5;
  CHECK_THROWS_AS(c.validate(false), ConfigError);
  c.mode = TrainMode::kJoint;
  CHECK_THROWS_AS(c.validate(false), ConfigError);
  CHECK_NOTHROW(c.validate(true));
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(true), ConfigError);
}

TEST_CASE("lr 0 leaves the encoders at their initialization; seeded runs repeat") {
  testing::TempDir dir("retr");
  datakit::SynthConfig sc;
  sc.resolution = 16;
  sc.train = 24;
  sc.val = 8;
  sc.test = 8;
  auto m = datakit::generate_synth_dataset(sc, 3, dir.path());
  RetrievalConfig c;
  c.mode = TrainMode::kBaseline;
  c.replacement.r = 0.0;
  c.epochs = 2;
  c.batch_size = 8;
  c.lr = 0.0;
  c.encoder.channels = 8;
  auto r = train_retrieval(m, c, nullptr, 5);
  std::vector<datakit::CaptionRecord> train;
  for (const auto* p : m.pairs_in(datakit::Split::kTrain)) train.push_back(m.caption(p->caption_id));
  auto init = make_encoders(datakit::build_vocab(train), 16, c.encoder, 5);
  CHECK(parameters_equal(snapshot_parameters(*r.best.image), snapshot_parameters(*init.image)));
  CHECK(parameters_equal(snapshot_parameters(*r.best.text), snapshot_parameters(*init.text)));

  c.lr = 1e-3;
  auto a = train_retrieval(m, c, nullptr, 5);
  auto b = train_retrieval(m, c, nullptr, 5);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[1].train_loss == b.history[1].train_loss);
  CHECK(a.history[1].val_r1 == b.history[1].val_r1);

  save_encoders(a.best, 5, dir / "enc");
  auto loaded = load_encoders(dir / "enc");
  CHECK(parameters_equal(snapshot_parameters(*loaded.image), snapshot_parameters(*a.best.image)));
}

}  // TEST_SUITE
