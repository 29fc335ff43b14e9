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


#include <algorithm>
#include <set>

#include "doctest.h"
#include "pcda/datakit.hpp"
#include "pcda/error.hpp"
#include "pcda/hashing.hpp"
#include "pcda/oracle.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;
using namespace pcda::datakit;

namespace {

CaptionRecord make_caption(std::string id, std::vector<std::string> tokens) {
  CaptionRecord c;
  c.caption_id = std::move(id);
  c.image_id = "img";
  c.tokens = std::move(tokens);
  c.pos_tags = tag_pos(c.tokens, template_lexicon());
  return c;
}

bool pixel_is(const Image& img, int row, int col, Rgb8 c) {
  auto rgb = img.to_rgb8();
  const std::size_t i = (static_cast<std::size_t>(row) * img.width() + col) * 3;
  return rgb[i] == c.r && rgb[i + 1] == c.g && rgb[i + 2] == c.b;
}

}  // namespace

TEST_SUITE("datakit") {

TEST_CASE("centered large red circle has the palette red at the center") {
  SynthAttrSpec s{Shape::kCircle, Color::kRed, Size::kLarge, Background::kWhite, 0, 0};
  auto img = render_synthetic(s, 64);
  CHECK(pixel_is(img, 32, 32, kColorPalette[0]));
  CHECK(pixel_is(img, 0, 0, kBackgroundPalette[0]));
  CHECK(render_synthetic(s, 64) == img);
}

TEST_CASE("offset small blue square covers side^2 pixels") {
  SynthAttrSpec s{Shape::kSquare, Color::kBlue, Size::kSmall, Background::kGray, 8, 8};
  auto img = render_synthetic(s, 64);
  const int side = side_length(Size::kSmall, 64);
  CHECK(side == 16);
  int blue = 0;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) blue += pixel_is(img, r, c, kColorPalette[2]) ? 1 : 0;
  }
  CHECK(blue == side * side);
  // the square is displaced from the center by the offset
  CHECK(pixel_is(img, 32 + 8, 32 + 8, kColorPalette[2]));
  CHECK(pixel_is(img, 32 - 4, 32 - 4, kBackgroundPalette[1]));
}

TEST_CASE("shapes that leave the canvas are rejected") {
  SynthAttrSpec s{Shape::kSquare, Color::kBlue, Size::kLarge, Background::kGray, 20, 0};
  CHECK_THROWS_AS(render_synthetic(s, 64), InvalidInput);
  CHECK_THROWS_AS(render_synthetic(SynthAttrSpec{}, 12), InvalidInput);
}

TEST_CASE("every sampled spec fits the canvas") {
  Rng rng = make_rng(3, "t");
  for (int res : {16, 32, 64}) {
    for (const auto& s : sample_specs(300, res, rng)) CHECK_NOTHROW(render_synthetic(s, res));
  }
}

TEST_CASE("template caption and tags") {
  Attributes a{Shape::kTriangle, Color::kOrange, Size::kMedium, Background::kBlack};
  auto toks = caption_tokens(a);
  CHECK(toks == std::vector<std::string>{"a", "medium", "orange", "triangle", "on", "a", "black", "background"});
  CHECK(tag_pos(toks, template_lexicon()) ==
        std::vector<std::string>{"DET", "ADJ", "ADJ", "NOUN", "ADP", "DET", "ADJ", "NOUN"});
  CHECK(tag_pos({"a", "red", "circle"}, template_lexicon()) == std::vector<std::string>{"DET", "ADJ", "NOUN"});
  CHECK(tag_pos({"zzz"}, template_lexicon()) == std::vector<std::string>{"UNK"});
  auto p = parse_caption(toks);
  REQUIRE(p.shape);
  CHECK(*p.shape == Shape::kTriangle);
  CHECK(*p.color == Color::kOrange);
  CHECK(*p.size == Size::kMedium);
  CHECK(*p.bg == Background::kBlack);
  // two colour words leave the slot unparsed
  CHECK_FALSE(parse_caption({"a", "red", "blue", "circle"}).color);
}

TEST_CASE("build_vocab is an insertion-ordered set union") {
  auto v = build_vocab({make_caption("c0", {"a", "red", "bird"}), make_caption("c1", {"a", "blue", "bird"})});
  CHECK(v.tokens() == std::vector<std::string>{"a", "red", "bird", "blue"});
  CHECK(build_vocab({make_caption("c0", {"x", "y", "z", "w"})}).size() == 4);
  CHECK_THROWS_AS(build_vocab({}), InvalidInput);
}

TEST_CASE("template grammar vocabulary has 19 tokens and 12 adjectives") {
  std::vector<CaptionRecord> corpus;
  int n = 0;
  for (int s = 0; s < kNumShapes; ++s) {
    for (int c = 0; c < kNumColors; ++c) {
      for (int z = 0; z < kNumSizes; ++z) {
        for (int b = 0; b < kNumBackgrounds; ++b) {
          Attributes a{static_cast<Shape>(s), static_cast<Color>(c), static_cast<Size>(z), static_cast<Background>(b)};
          corpus.push_back(make_caption("c" + std::to_string(n++), caption_tokens(a)));
        }
      }
    }
  }
  CHECK(build_vocab(corpus).size() == 19);
  auto pos = build_pos_vocab(corpus);
  CHECK(pos.tokens_for("ADJ").size() == 12);
  CHECK(pos.tokens_for("NOUN").size() == 5);
  CHECK(pos.tokens_for("DET") == std::vector<std::string>{"a"});
  CHECK(pos.tokens_for("missing").empty());
}

TEST_CASE("a token seen under two tags lands in both sets") {
  auto c0 = make_caption("c0", {"orange", "circle"});
  auto c1 = make_caption("c1", {"an", "orange"});
  c1.pos_tags = {"DET", "NOUN"};
  auto pos = build_pos_vocab({c0, c1});
  CHECK(std::count(pos.tokens_for("ADJ").begin(), pos.tokens_for("ADJ").end(), "orange") == 1);
  CHECK(std::count(pos.tokens_for("NOUN").begin(), pos.tokens_for("NOUN").end(), "orange") == 1);
}

TEST_CASE("caption validation catches misaligned tags") {
  auto c = make_caption("c9", {"a", "red", "circle", "on", "a"});
  c.pos_tags.pop_back();
  try {
    validate_caption(c);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.kind() == ValidationError::Kind::kAlignment);
    CHECK(std::string(e.what()).find("c9") != std::string::npos);
  }
}

TEST_CASE("generated dataset: counts, disjoint splits, round trip, determinism") {
  testing::TempDir a("ds_a"), b("ds_b");
  SynthConfig cfg;
  cfg.resolution = 16;
  cfg.train = 60;
  cfg.val = 10;
  cfg.test = 10;
  auto m = generate_synth_dataset(cfg, 7, a.path());
  CHECK(m.pairs.size() == 80);
  std::set<std::string> ids;
  for (auto split : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (const auto& id : m.image_ids(split)) CHECK(ids.insert(id).second);
  }
  CHECK(ids.size() == 80);

  auto loaded = load_dataset(a.path());
  CHECK(manifest_json(loaded) == read_text(a / "manifest.json"));
  CHECK(loaded.captions.size() == 80);
  CHECK(loaded.pairs_in(Split::kTest).size() == 10);

  generate_synth_dataset(cfg, 7, b.path());
  CHECK(sha256_tree(a.path()) == sha256_tree(b.path()));
}

TEST_CASE("class split holds out whole classes") {
  testing::TempDir a("ds_class");
  SynthConfig cfg;
  cfg.resolution = 16;
  cfg.train = 80;
  cfg.val = 10;
  cfg.test = 30;
  cfg.split_mode = SplitMode::kClass;
  auto m = generate_synth_dataset(cfg, 11, a.path());
  std::set<int> train_classes, test_classes;
  for (const auto* p : m.pairs_in(Split::kTrain)) train_classes.insert(*p->class_id);
  for (const auto* p : m.pairs_in(Split::kTest)) test_classes.insert(*p->class_id);
  for (int c : test_classes) CHECK(train_classes.count(c) == 0);
  CHECK(test_classes.size() <= 6);
}

TEST_CASE("missing image is a dangling reference naming the id") {
  testing::TempDir a("ds_dangling");
  SynthConfig cfg;
  cfg.resolution = 16;
  cfg.train = 5;
  cfg.val = 2;
  cfg.test = 2;
  auto m = generate_synth_dataset(cfg, 1, a.path());
  const auto victim = m.pairs[3].image_id;
  std::filesystem::remove(m.image_path(victim));
  try {
    load_dataset(a.path());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.kind() == ValidationError::Kind::kDanglingReference);
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("caption with five tokens and four tags fails to load") {
  testing::TempDir a("ds_align");
  SynthConfig cfg;
  cfg.resolution = 16;
  cfg.train = 3;
  cfg.val = 1;
  cfg.test = 1;
  generate_synth_dataset(cfg, 1, a.path());
  write_text(a / "captions.jsonl",
             read_text(a / "captions.jsonl") +
                 R"({"caption_id":"cbad","image_id":"x","tokens":["a","b","c","d","e"],"pos_tags":["A","B","C","D"]})"
                 "\n");
  try {
    load_dataset(a.path());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.kind() == ValidationError::Kind::kAlignment);
    CHECK(std::string(e.what()).find("cbad") != std::string::npos);
  }
}

TEST_CASE("untrained oracle is a total, deterministic function") {
  torch::manual_seed(0);
  AttributeOracle oracle(16);
  Image gray(16, 16);
  gray.fill(0.5f, 0.5f, 0.5f);
  auto a = attribute_oracle(oracle, gray);
  auto b = attribute_oracle(oracle, gray);
  CHECK(a == b);
}

}  // TEST_SUITE
