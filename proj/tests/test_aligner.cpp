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
#include "pcda/aligner.hpp"
#include "pcda/datakit.hpp"
#include "pcda/error.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::aligner;

namespace {

AlignConfig small() {
  AlignConfig a;
  a.d_w = 8;
  a.embed_dim = 8;
  a.hidden = 8;
  a.epochs = 3;
  a.batch_size = 8;
  return a;
}

struct Fixture {
  testing::TempDir dir{"align"};
  datakit::DatasetManifest manifest;
  projector::LatentStore store;
  Fixture() {
    datakit::SynthConfig sc;
    sc.resolution = 8;
    sc.train = 20;
    sc.val = sc.test = 2;
    manifest = datakit::generate_synth_dataset(sc, 2, dir.path());
    store.ids = manifest.image_ids(datakit::Split::kTrain);
    auto g = make_torch_generator(3);
    store.w = torch::randn({static_cast<std::int64_t>(store.ids.size()), 8}, g);
    store.stats = projector::w_stats_of(store.w);
  }
};

}  // namespace

TEST_SUITE("aligner") {

TEST_CASE("align loss values and gradient") {
  auto w = torch::randn({8}, torch::kFloat64);
  CHECK(align_loss(w, w).item<double>() == 0.0);
  auto e = torch::zeros({8}, torch::kFloat64);
  e[3] = 1.0;
  CHECK(align_loss(w + e, w).item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  // batch reduction is the mean over rows
  auto a = torch::zeros({2, 8}, torch::kFloat64), b = torch::zeros({2, 8}, torch::kFloat64);
  b[0][0] = 1;
  b[1][0] = 3;
  CHECK(align_loss(a, b).item<double>() == doctest::Approx(5.0));
  auto t = torch::randn({8}, torch::kFloat64).requires_grad_(true);
  align_loss(t, w).backward();
  CHECK(torch::allclose(t.grad(), 2 * (t.detach() - w)));
  CHECK_THROWS_AS(align_loss(torch::zeros({3}), torch::zeros({4})), InvalidInput);
}

TEST_CASE("token ids map unknown words to 0") {
  datakit::Vocabulary v({"a", "red", "circle"});
  CHECK(token_ids(v, {"a", "blue", "circle"}) == std::vector<std::int64_t>{1, 0, 3});
}

TEST_CASE("encoding is deterministic and rejects empty captions") {
  datakit::Vocabulary v({"a", "red", "circle"});
  auto m = make_alignment_model(v, small(), 1);
  auto x = encode_text_to_w(m, {"a", "red", "circle"});
  CHECK(x.sizes() == torch::IntArrayRef({8}));
  CHECK(torch::equal(x, encode_text_to_w(m, {"a", "red", "circle"})));
  auto batch = encode_texts_to_w(m, {{"a", "red", "circle"}, {"a", "circle"}});
  CHECK(torch::allclose(batch[0], x, 1e-5, 1e-6));
  CHECK_THROWS_AS(encode_text_to_w(m, {}), InvalidInput);
}

TEST_CASE("lr 0 keeps the initialization; seeded runs repeat") {
  Fixture f;
  auto cfg = small();
  cfg.lr = 0.0;
  auto r = train_alignment(f.manifest, f.store, cfg, 4);
  auto init = make_alignment_model(r.model.vocab, cfg, 4);
  CHECK(parameters_equal(snapshot_parameters(*r.model.encoder), snapshot_parameters(*init.encoder)));
  CHECK(r.history.size() == 3 * 3);

  cfg.lr = 1e-2;
  auto a = train_alignment(f.manifest, f.store, cfg, 4);
  auto b = train_alignment(f.manifest, f.store, cfg, 4);
  write_align_history(a.history, f.dir / "a.csv");
  write_align_history(b.history, f.dir / "b.csv");
  CHECK(read_text(f.dir / "a.csv") == read_text(f.dir / "b.csv"));
  CHECK(a.baseline_loss > 0.0);
}

TEST_CASE("caption whose image has no latent is rejected") {
  Fixture f;
  f.store.ids.back() = "missing";
  CHECK_THROWS_AS(train_alignment(f.manifest, f.store, small(), 1), InvalidInput);
}

TEST_CASE("checkpoint round trip and text_to_image") {
  Fixture f;
  auto r = train_alignment(f.manifest, f.store, small(), 5);
  save_alignment(r.model, 5, f.dir / "enc");
  auto back = load_alignment(f.dir / "enc");
  CHECK(back.vocab == r.model.vocab);
  const std::vector<std::string> cap = {"a", "small", "red", "circle", "on", "a", "white", "background"};
  CHECK(torch::equal(encode_text_to_w(back, cap), encode_text_to_w(r.model, cap)));

  ganlite::GanConfig g;
  g.resolution = 8;
  g.d_z = g.d_w = 8;
  g.mapping_layers = 2;
  g.max_channels = g.min_channels = 8;
  ganlite::GanModel gan(g, 1);
  auto img = text_to_image(back, gan, cap);
  CHECK(torch::equal(img, text_to_image(back, gan, cap)));
  auto imgs = texts_to_images(back, gan, {cap, cap});
  CHECK(imgs.size(0) == 2);
}

}  // TEST_SUITE
