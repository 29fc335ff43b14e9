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

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pcda/aligner.hpp"
#include "pcda/datakit.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/seed.hpp"

namespace pcda::augmentor {

enum class Strategy { kRandom, kPos };
std::string_view strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);  // throws ConfigError

struct ReplacementConfig {
  double r = 0.0;
  Strategy strategy = Strategy::kRandom;
  bool exclude_original = true;
  // When set, only positions whose tag is listed may be replaced and the
  // rate applies to that subset.
  std::optional<std::set<std::string>> tag_filter;

  void validate() const;  // throws ConfigError when r is outside [0, 1]
};

// ceil(r * N) distinct positions drawn uniformly, ascending; empty for r = 0.
std::vector<std::size_t> select_replacement_positions(std::size_t n, double r, Rng& rng);

struct Replacement {
  std::vector<std::string> tokens;
  std::vector<std::string> pos_tags;
  std::vector<std::size_t> replaced_positions;
  std::vector<std::size_t> skipped_positions;  // pos strategy had no alternative
};

Replacement replace_tokens(const datakit::CaptionRecord& record, const ReplacementConfig& config,
                           const datakit::Vocabulary& vocab, const datakit::PosVocabulary& pos_vocab, Rng& rng);

// Same substitution rule applied at caller-chosen positions.
Replacement replace_tokens_at(const datakit::CaptionRecord& record, const std::vector<std::size_t>& positions,
                              const ReplacementConfig& config, const datakit::Vocabulary& vocab,
                              const datakit::PosVocabulary& pos_vocab, Rng& rng);

struct Provenance {
  std::uint64_t seed = 0;
  double r = 0.0;
  Strategy strategy = Strategy::kRandom;
};

struct AugmentedPair {
  std::string source_caption_id;
  std::string source_pair_id;
  std::vector<std::string> tokens_prime;
  std::vector<std::string> pos_tags_prime;
  std::vector<std::size_t> replaced_positions;
  std::vector<std::size_t> skipped_positions;
  torch::Tensor image_prime;  // [3, H, W] in [0, 1]
  Provenance provenance;
};

// Everything generation needs besides the caption.
struct AugmentContext {
  const datakit::Vocabulary* vocab = nullptr;
  const datakit::PosVocabulary* pos_vocab = nullptr;
  aligner::AlignmentModel* alignment = nullptr;
  ganlite::GanModel* gan = nullptr;
};

AugmentedPair generate_augmented_pair(const datakit::CaptionRecord& record, const std::string& pair_id,
                                      const ReplacementConfig& config, AugmentContext& ctx, std::uint64_t seed);

struct SourceRecord {
  const datakit::CaptionRecord* caption = nullptr;
  std::string pair_id;
};

// round(scale * |sources|) pairs. Sources are drawn without replacement
// first and with replacement for any excess. Images are generated batched.
std::vector<AugmentedPair> augment_batch(const std::vector<SourceRecord>& sources, const ReplacementConfig& config,
                                         AugmentContext& ctx, std::uint64_t seed, double scale = 1.0);

// Source indices augment_batch would use, exposed for inspection.
std::vector<std::size_t> sample_sources(std::size_t n, double scale, Rng& rng);

// Offline mode: writes dir/augpairs/<seed>/ as a dataset directory plus
// provenance.jsonl, and reads it back.
std::filesystem::path write_augmented_pairs(const std::vector<AugmentedPair>& pairs, std::uint64_t seed,
                                            const std::filesystem::path& dataset_dir);
std::vector<AugmentedPair> read_augmented_pairs(const std::filesystem::path& dir);

}  // namespace pcda::augmentor
