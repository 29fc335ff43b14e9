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
#include "pcda/config.hpp"
#include "pcda/error.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"
#include "test_support.hpp"

using namespace pcda;

namespace {

std::string message_of(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty document gives the defaults") {
  auto c = parse_config("");
  CHECK(c.seed == 7);
  CHECK(c.retrieval.margin == 0.3);
  CHECK(c.retrieval.lr == 1e-4);
  CHECK(c.projection.config.noise_coeff == 0.05);
  CHECK(c.augmentation.replacement.r == 0.7);
  CHECK(c.eval.protocol.n == 1000);
  CHECK(c.eval.protocol.repeats == 10);
}

TEST_CASE("unknown keys are rejected by name") {
  CHECK(message_of("seed: 3\nsede: 4\n").find("sede") != std::string::npos);
  CHECK(message_of("retrieval:\n  margn: 0.2\n").find("retrieval.margn") != std::string::npos);
  CHECK(message_of("gan: 3\n").find("gan") != std::string::npos);
  CHECK(message_of("seed: [1, 2]\n").find("seed") != std::string::npos);
  CHECK_FALSE(message_of("seed: {").empty());
}

TEST_CASE("enumerations and ranges are validated") {
  CHECK_FALSE(message_of("retrieval:\n  mode: sideways\n").empty());
  CHECK_FALSE(message_of("augmentation:\n  r: 1.5\n").empty());
  CHECK_FALSE(message_of("augmentation:\n  strategy: noun\n").empty());
  CHECK_FALSE(message_of("dataset:\n  resolution: 48\n").empty());
  CHECK_FALSE(message_of("retrieval:\n  mode: baseline\n").empty());  // r defaults to 0.7
  CHECK(message_of("retrieval:\n  mode: baseline\naugmentation:\n  r: 0\n").empty());
}

TEST_CASE("derived fields follow their sections") {
  auto c = parse_config("dataset:\n  resolution: 32\ngan:\n  d_w: 64\naugmentation:\n  r: 0.3\n  scale: 1.1\n");
  CHECK(c.gan.resolution == 32);
  CHECK(c.alignment.d_w == 64);
  CHECK(c.retrieval.replacement.r == 0.3);
  CHECK(c.retrieval.aug_scale == 1.1);
}

TEST_CASE("yaml round trip is a fixed point for every preset") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    auto c = preset(name);
    const auto y = to_yaml(c);
    CHECK(to_yaml(parse_config(y)) == y);
  }
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("tag filter and optional eval seed survive a round trip") {
  auto c = parse_config("augmentation:\n  tag_filter: [ADJ, NOUN]\neval:\n  seed: 99\n");
  REQUIRE(c.augmentation.replacement.tag_filter);
  CHECK(*c.augmentation.replacement.tag_filter == std::set<std::string>{"ADJ", "NOUN"});
  auto back = parse_config(to_yaml(c));
  CHECK(back.eval.seed == std::optional<std::uint64_t>(99));
  CHECK(back.augmentation.replacement.tag_filter == c.augmentation.replacement.tag_filter);
}

TEST_CASE("load_config reports a missing file") {
  testing::TempDir d("cfg");
  CHECK_THROWS_AS(load_config(d / "absent.yaml"), ConfigError);
  write_text(d / "ok.yaml", "seed: 11\n");
  CHECK(load_config(d / "ok.yaml").seed == 11);
}

}  // TEST_SUITE

TEST_SUITE("seed") {

TEST_CASE("derived streams are stable and distinct") {
  CHECK(derive_seed(7, "stage/gan") == derive_seed(7, "stage/gan"));
  std::set<std::uint64_t> seen;
  for (int root = 0; root < 20; ++root) {
    for (const char* label : {"stage/data", "stage/gan", "stage/align", "eval/repeat/0", "eval/repeat/1"}) {
      CHECK(seen.insert(derive_seed(root, label)).second);
    }
  }
  CHECK(site_label({"a", "b", "c"}) == "a/b/c");
  Rng a = make_rng(1, "x"), b = make_rng(1, "x");
  CHECK(a() == b());
  for (int i = 0; i < 1000; ++i) CHECK(uniform_index(a, 7) < 7);
  auto g1 = make_torch_generator(5), g2 = make_torch_generator(5);
  CHECK(torch::equal(torch::randn({4}, g1), torch::randn({4}, g2)));
}

}  // TEST_SUITE
