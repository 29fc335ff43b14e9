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

#include "pcda/augmentor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/image.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::augmentor {
namespace {

// Tag under which a token first appears in V_pos.
std::unordered_map<std::string, std::string> tag_index(const datakit::PosVocabulary& pos_vocab) {
  std::unordered_map<std::string, std::string> out;
  for (const auto& [tag, tokens] : pos_vocab.by_tag) {
    for (const auto& t : tokens) out.emplace(t, tag);
  }
  return out;
}

std::optional<std::string> draw_excluding(const std::vector<std::string>& pool, const std::string& original,
                                          bool exclude_original, Rng& rng) {
  std::vector<const std::string*> candidates;
  candidates.reserve(pool.size());
  for (const auto& t : pool) {
    if (!exclude_original || t != original) candidates.push_back(&t);
  }
  if (candidates.empty()) return std::nullopt;
  return *candidates[uniform_index(rng, candidates.size())];
}

}  // namespace

std::string_view strategy_name(Strategy s) { return s == Strategy::kRandom ? "random" : "pos"; }

Strategy strategy_from_name(std::string_view name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "pos") return Strategy::kPos;
  throw ConfigError("unknown replacement strategy '" + std::string(name) + "' (expected random or pos)");
}

void ReplacementConfig::validate() const {
  if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("replacement rate r must lie in [0, 1], got " + std::to_string(r));
}

std::vector<std::size_t> select_replacement_positions(std::size_t n, double r, Rng& rng) {
  if (r <= 0.0 || n == 0) return {};
  auto k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-12));
  k = std::min(k, n);
  // Partial Fisher-Yates.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Replacement replace_tokens_at(const datakit::CaptionRecord& record, const std::vector<std::size_t>& positions,
                              const ReplacementConfig& config, const datakit::Vocabulary& vocab,
                              const datakit::PosVocabulary& pos_vocab, Rng& rng) {
  Replacement out;
  out.tokens = record.tokens;
  out.pos_tags = record.pos_tags;
  if (out.pos_tags.size() != out.tokens.size()) out.pos_tags.assign(out.tokens.size(), std::string(datakit::kUnknownTag));
  const auto tags = config.strategy == Strategy::kRandom ? tag_index(pos_vocab)
                                                          : std::unordered_map<std::string, std::string>{};
  for (auto p : positions) {
    if (p >= out.tokens.size()) throw InvalidInput("replacement position out of range");
    const auto& original = record.tokens[p];
    if (config.strategy == Strategy::kRandom) {
      auto t = draw_excluding(vocab.tokens(), original, config.exclude_original, rng);
      if (!t) {
        out.skipped_positions.push_back(p);
        continue;
      }
      out.tokens[p] = *t;
      auto it = tags.find(*t);
      out.pos_tags[p] = it == tags.end() ? std::string(datakit::kUnknownTag) : it->second;
    } else {
      const auto& tag = out.pos_tags[p];
      if (!pos_vocab.by_tag.count(tag)) {
        throw InvalidInput("pos strategy: tag '" + tag + "' of caption " + record.caption_id + " is not in V_pos");
      }
      auto t = draw_excluding(pos_vocab.tokens_for(tag), original, config.exclude_original, rng);
      if (!t) {
        out.skipped_positions.push_back(p);
        continue;
      }
      out.tokens[p] = *t;
    }
    out.replaced_positions.push_back(p);
  }
  return out;
}

Replacement replace_tokens(const datakit::CaptionRecord& record, const ReplacementConfig& config,
                           const datakit::Vocabulary& vocab, const datakit::PosVocabulary& pos_vocab, Rng& rng) {
  config.validate();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < record.tokens.size(); ++i) {
    if (!config.tag_filter || (i < record.pos_tags.size() && config.tag_filter->count(record.pos_tags[i]))) {
      eligible.push_back(i);
    }
  }
  std::vector<std::size_t> positions;
  for (auto j : select_replacement_positions(eligible.size(), config.r, rng)) positions.push_back(eligible[j]);
  return replace_tokens_at(record, positions, config, vocab, pos_vocab, rng);
}

namespace {

AugmentedPair make_pair(const datakit::CaptionRecord& record, const std::string& pair_id,
                        const ReplacementConfig& config, AugmentContext& ctx, std::uint64_t seed, Rng& rng) {
  auto rep = replace_tokens(record, config, *ctx.vocab, *ctx.pos_vocab, rng);
  AugmentedPair p;
  p.source_caption_id = record.caption_id;
  p.source_pair_id = pair_id;
  p.tokens_prime = std::move(rep.tokens);
  p.pos_tags_prime = std::move(rep.pos_tags);
  p.replaced_positions = std::move(rep.replaced_positions);
  p.skipped_positions = std::move(rep.skipped_positions);
  p.provenance = {seed, config.r, config.strategy};
  return p;
}

void check_context(const AugmentContext& ctx) {
  if (!ctx.vocab || !ctx.pos_vocab || !ctx.alignment || !ctx.gan) {
    throw InvalidInput("augmentation needs vocabularies, an alignment model and a generator");
  }
}

}  // namespace

AugmentedPair generate_augmented_pair(const datakit::CaptionRecord& record, const std::string& pair_id,
                                      const ReplacementConfig& config, AugmentContext& ctx, std::uint64_t seed) {
  check_context(ctx);
  Rng rng = make_rng(seed, "augment/pair/" + record.caption_id);
  auto p = make_pair(record, pair_id, config, ctx, seed, rng);
  p.image_prime = aligner::text_to_image(*ctx.alignment, *ctx.gan, p.tokens_prime);
  return p;
}

std::vector<std::size_t> sample_sources(std::size_t n, double scale, Rng& rng) {
  if (scale < 0.0) throw InvalidInput("augmentation scale must be >= 0");
  const auto total = static_cast<std::size_t>(std::llround(scale * static_cast<double>(n)));
  std::vector<std::size_t> out;
  if (n == 0) return out;
  out.reserve(total);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const auto first = std::min(total, n);
  for (std::size_t i = 0; i < first; ++i) {
    std::swap(perm[i], perm[i + uniform_index(rng, n - i)]);
    out.push_back(perm[i]);
  }
  while (out.size() < total) out.push_back(uniform_index(rng, n));
  return out;
}

std::vector<AugmentedPair> augment_batch(const std::vector<SourceRecord>& sources, const ReplacementConfig& config,
                                         AugmentContext& ctx, std::uint64_t seed, double scale) {
  check_context(ctx);
  config.validate();
  Rng rng = make_rng(seed, "augment/batch");
  std::vector<AugmentedPair> out;
  std::vector<std::vector<std::string>> captions;
  for (auto i : sample_sources(sources.size(), scale, rng)) {
    out.push_back(make_pair(*sources[i].caption, sources[i].pair_id, config, ctx, seed, rng));
    captions.push_back(out.back().tokens_prime);
  }
  if (out.empty()) return out;
  auto images = aligner::texts_to_images(*ctx.alignment, *ctx.gan, captions);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].image_prime = images[static_cast<std::int64_t>(i)];
  return out;
}

std::filesystem::path write_augmented_pairs(const std::vector<AugmentedPair>& pairs, std::uint64_t seed,
                                            const std::filesystem::path& dataset_dir) {
  const auto dir = dataset_dir / "augpairs" / std::to_string(seed);
  std::filesystem::create_directories(dir / "images");
  datakit::DatasetManifest m;
  m.name = "augpairs";
  m.synthetic = false;
  std::ostringstream prov;
  char id[32];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    std::snprintf(id, sizeof(id), "%05zu", i);
    const std::string image_id = std::string("i") + id, caption_id = std::string("c") + id;
    const auto img = Image::from_tensor(p.image_prime);
    if (m.resolution == 0) m.resolution = img.height();
    write_png(dir / "images" / (image_id + ".png"), img);
    m.captions.push_back({caption_id, image_id, p.tokens_prime, p.pos_tags_prime, std::nullopt});
    m.pairs.push_back({std::string("p") + id, caption_id, image_id, datakit::Split::kTrain, std::nullopt, std::nullopt});
    nlohmann::ordered_json j;
    j["pair_id"] = std::string("p") + id;
    j["source_caption_id"] = p.source_caption_id;
    j["source_pair_id"] = p.source_pair_id;
    j["replaced_positions"] = p.replaced_positions;
    j["skipped_positions"] = p.skipped_positions;
    j["seed"] = p.provenance.seed;
    j["r"] = p.provenance.r;
    j["strategy"] = strategy_name(p.provenance.strategy);
    prov << j.dump() << "\n";
  }
  m.reindex();
  save_dataset_metadata(m, dir);
  write_text(dir / "provenance.jsonl", prov.str());
  return dir;
}

std::vector<AugmentedPair> read_augmented_pairs(const std::filesystem::path& dir) {
  auto m = datakit::load_dataset(dir);
  std::istringstream prov(read_text(dir / "provenance.jsonl"));
  std::unordered_map<std::string, nlohmann::json> by_pair;
  for (std::string line; std::getline(prov, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    by_pair.emplace(j.at("pair_id").get<std::string>(), j);
  }
  std::vector<AugmentedPair> out;
  for (const auto& pr : m.pairs) {
    auto it = by_pair.find(pr.pair_id);
    if (it == by_pair.end()) throw ArtifactError("provenance.jsonl has no entry for " + pr.pair_id);
    const auto& j = it->second;
    const auto& c = m.caption(pr.caption_id);
    AugmentedPair p;
    p.source_caption_id = j.at("source_caption_id").get<std::string>();
    p.source_pair_id = j.at("source_pair_id").get<std::string>();
    p.tokens_prime = c.tokens;
    p.pos_tags_prime = c.pos_tags;
    p.replaced_positions = j.at("replaced_positions").get<std::vector<std::size_t>>();
    p.skipped_positions = j.at("skipped_positions").get<std::vector<std::size_t>>();
    p.provenance = {j.at("seed").get<std::uint64_t>(), j.at("r").get<double>(),
                    strategy_from_name(j.at("strategy").get<std::string>())};
    p.image_prime = m.load_image(pr.image_id).to_tensor();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pcda::augmentor
