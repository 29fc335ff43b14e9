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


#include <set>

#include "doctest.h"
#include "pcda/aligner.hpp"
#include "pcda/augmentor.hpp"
#include "pcda/datakit.hpp"
#include "pcda/error.hpp"
#include "pcda/ganlite.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::augmentor;
using datakit::CaptionRecord;

namespace {

CaptionRecord template_caption(const std::string& id, datakit::Attributes a) {
  CaptionRecord c;
  c.caption_id = id;
  c.image_id = "i" + id;
  c.tokens = datakit::caption_tokens(a);
  c.pos_tags = datakit::tag_pos(c.tokens, datakit::template_lexicon());
  return c;
}

std::vector<CaptionRecord> corpus() {
  std::vector<CaptionRecord> out;
  int n = 0;
  for (int s = 0; s < datakit::kNumShapes; ++s) {
    for (int c = 0; c < datakit::kNumColors; ++c) {
      datakit::Attributes a{static_cast<datakit::Shape>(s), static_cast<datakit::Color>(c),
                            static_cast<datakit::Size>(n % 3), static_cast<datakit::Background>(n % 3)};
      out.push_back(template_caption(std::to_string(n++), a));
    }
  }
  return out;
}

struct Tiny {
  std::vector<CaptionRecord> captions = corpus();
  datakit::Vocabulary vocab = datakit::build_vocab(captions);
  datakit::PosVocabulary pos = datakit::build_pos_vocab(captions);
  ganlite::GanModel gan{nullptr};
  aligner::AlignmentModel align;
  AugmentContext ctx;
  Tiny() {
    ganlite::GanConfig g;
    g.resolution = 8;
    g.d_z = g.d_w = 16;
    g.mapping_layers = 2;
    g.max_channels = g.min_channels = 8;
    gan = ganlite::GanModel(g, 1);
    aligner::AlignConfig a;
    a.d_w = 16;
    a.embed_dim = a.hidden = 8;
    align = aligner::make_alignment_model(vocab, a, 2);
    ctx = {&vocab, &pos, &align, &gan};
  }
};

}  // namespace

TEST_SUITE("augmentor") {

TEST_CASE("position count follows ceil(r N)") {
  Rng rng = make_rng(1, "pos");
  CHECK(select_replacement_positions(8, 0.0, rng).empty());
  CHECK(select_replacement_positions(7, 1.0, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK(select_replacement_positions(8, 0.3, rng).size() == 3);
  CHECK(select_replacement_positions(10, 0.3, rng).size() == 3);  // 0.3 * 10 is not rounded up to 4
  std::vector<int> freq(10, 0);
  for (int t = 0; t < 1000; ++t) {
    auto p = select_replacement_positions(10, 0.7, rng);
    REQUIRE(p.size() == 7);
    CHECK(std::set<std::size_t>(p.begin(), p.end()).size() == 7);
    for (auto i : p) ++freq[i];
  }
  for (int f : freq) CHECK(std::abs(f / 1000.0 - 0.7) < 0.05);
}

TEST_CASE("r = 0 is the identity") {
  Tiny t;
  Rng rng = make_rng(1, "r0");
  ReplacementConfig cfg;
  auto out = replace_tokens(t.captions[3], cfg, t.vocab, t.pos, rng);
  CHECK(out.tokens == t.captions[3].tokens);
  CHECK(out.replaced_positions.empty());
}

TEST_CASE("random strategy at r = 1 replaces every token") {
  Tiny t;
  Rng rng = make_rng(2, "r1");
  ReplacementConfig cfg{1.0};
  for (const auto& c : t.captions) {
    auto out = replace_tokens(c, cfg, t.vocab, t.pos, rng);
    CHECK(out.replaced_positions.size() == c.tokens.size());
    for (std::size_t i = 0; i < c.tokens.size(); ++i) {
      CHECK(out.tokens[i] != c.tokens[i]);
      CHECK(t.vocab.contains(out.tokens[i]));
    }
  }
}

TEST_CASE("pos strategy preserves tags and skips singleton classes") {
  Tiny t;
  Rng rng = make_rng(3, "pos");
  ReplacementConfig cfg{1.0, Strategy::kPos};
  auto out = replace_tokens(t.captions[0], cfg, t.vocab, t.pos, rng);
  CHECK(out.pos_tags == t.captions[0].pos_tags);
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const auto& pool = t.pos.tokens_for(out.pos_tags[i]);
    CHECK(std::find(pool.begin(), pool.end(), out.tokens[i]) != pool.end());
  }
  // "a" and "on" are the only members of their tags
  CHECK(out.skipped_positions == std::vector<std::size_t>{0, 4, 5});
  CHECK(out.replaced_positions.size() == 5);
}

TEST_CASE("pos strategy rejects a tag missing from V_pos") {
  Tiny t;
  Rng rng = make_rng(3, "pos");
  auto c = t.captions[0];
  c.pos_tags[1] = "VERB";
  CHECK_THROWS_AS(replace_tokens_at(c, {1}, {1.0, Strategy::kPos}, t.vocab, t.pos, rng), InvalidInput);
}

TEST_CASE("tag filter restricts eligible positions") {
  Tiny t;
  Rng rng = make_rng(4, "filter");
  ReplacementConfig cfg{1.0};
  cfg.tag_filter = std::set<std::string>{"NOUN"};
  auto out = replace_tokens(t.captions[5], cfg, t.vocab, t.pos, rng);
  CHECK(out.replaced_positions == std::vector<std::size_t>{3, 7});
}

TEST_CASE("r outside [0, 1] is a config error") {
  CHECK_THROWS_AS(ReplacementConfig{1.5}.validate(), ConfigError);
  CHECK_THROWS_AS(ReplacementConfig{-0.1}.validate(), ConfigError);
  CHECK_THROWS_AS(strategy_from_name("pso"), ConfigError);
}

TEST_CASE("source sampling by scale") {
  Rng rng = make_rng(5, "scale");
  CHECK(sample_sources(32, 1.0, rng).size() == 32);
  auto s09 = sample_sources(600, 0.9, rng);
  CHECK(s09.size() == 540);
  CHECK(std::set<std::size_t>(s09.begin(), s09.end()).size() == 540);
  auto s11 = sample_sources(600, 1.1, rng);
  CHECK(s11.size() == 660);
  CHECK(std::set<std::size_t>(s11.begin(), s11.end()).size() >= 540);
  CHECK(std::set<std::size_t>(s11.begin(), s11.end()).size() == 600);
}

TEST_CASE("r = 0 pair renders the original caption; pairs are seed-stable") {
  Tiny t;
  auto p = generate_augmented_pair(t.captions[2], "p2", {}, t.ctx, 11);
  CHECK(p.tokens_prime == t.captions[2].tokens);
  CHECK(torch::equal(p.image_prime, aligner::text_to_image(t.align, t.gan, t.captions[2].tokens)));
  auto a = generate_augmented_pair(t.captions[2], "p2", {0.5}, t.ctx, 11);
  auto b = generate_augmented_pair(t.captions[2], "p2", {0.5}, t.ctx, 11);
  CHECK(a.tokens_prime == b.tokens_prime);
  CHECK(torch::equal(a.image_prime, b.image_prime));
  CHECK(a.image_prime.sizes() == torch::IntArrayRef({3, 8, 8}));
}

TEST_CASE("augment_batch sizes, provenance and on-disk round trip") {
  Tiny t;
  testing::TempDir dir("aug");
  std::vector<SourceRecord> sources;
  for (std::size_t i = 0; i < t.captions.size(); ++i) sources.push_back({&t.captions[i], "p" + std::to_string(i)});
  auto pairs = augment_batch(sources, {0.7}, t.ctx, 13, 1.0);
  CHECK(pairs.size() == sources.size());
  CHECK(augment_batch(sources, {0.7}, t.ctx, 13, 0.5).size() == 12);
  for (const auto& p : pairs) {
    CHECK(p.replaced_positions.size() == 6);
    CHECK(p.provenance.seed == 13);
  }
  auto out = write_augmented_pairs(pairs, 13, dir.path());
  auto back = read_augmented_pairs(out);
  REQUIRE(back.size() == pairs.size());
  CHECK(back[4].tokens_prime == pairs[4].tokens_prime);
  CHECK(back[4].source_pair_id == pairs[4].source_pair_id);
  CHECK((back[4].image_prime - pairs[4].image_prime).abs().max().item<double>() <= 0.5 / 255 + 1e-6);
}

TEST_CASE("augmentation without a model is rejected") {
  Tiny t;
  AugmentContext empty;
  CHECK_THROWS_AS(generate_augmented_pair(t.captions[0], "p0", {}, empty, 1), InvalidInput);
}

}  // TEST_SUITE
