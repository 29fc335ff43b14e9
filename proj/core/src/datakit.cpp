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

#include "pcda/datakit.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::datakit {
namespace {

using ordered_json = nlohmann::ordered_json;

template <typename E, std::size_t N>
std::optional<E> enum_from_name(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string name_of(const std::array<std::string_view, N>& names, E e) {
  return std::string(names.at(static_cast<std::size_t>(e)));
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

bool inside_shape(Shape shape, double px, double py, double cx, double cy, double h) {
  const double dx = px - cx;
  const double dy = py - cy;
  switch (shape) {
    case Shape::kSquare:
      return std::abs(dx) < h && std::abs(dy) < h;
    case Shape::kCircle:
      return dx * dx + dy * dy <= h * h;
    case Shape::kTriangle: {
      if (dy < -h || dy >= h) return false;
      // apex at the top center, base along the bottom edge
      const double half_width = h * (dy + h) / (2.0 * h);
      return std::abs(dx) <= half_width;
    }
    case Shape::kCross: {
      const double t = h / 3.0;
      return (std::abs(dx) < t && std::abs(dy) < h) || (std::abs(dy) < t && std::abs(dx) < h);
    }
  }
  return false;
}

std::string format_id(char prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05d", prefix, i);
  return buf;
}

ordered_json attrs_to_json(const SynthAttrSpec& s) {
  ordered_json j;
  j["shape"] = name_of(kShapeNames, s.shape);
  j["color"] = name_of(kColorNames, s.color);
  j["size"] = name_of(kSizeNames, s.size);
  j["bg"] = name_of(kBackgroundNames, s.bg);
  j["row_offset"] = s.row_offset;
  j["col_offset"] = s.col_offset;
  return j;
}

SynthAttrSpec attrs_from_json(const nlohmann::json& j, const std::string& pair_id) {
  auto fail = [&](const std::string& what) {
    return ValidationError(ValidationError::Kind::kSchema, "pair " + pair_id + ": bad attrs field " + what);
  };
  SynthAttrSpec s;
  auto shape = shape_from_name(j.at("shape").get<std::string>());
  auto color = color_from_name(j.at("color").get<std::string>());
  auto size = size_from_name(j.at("size").get<std::string>());
  auto bg = background_from_name(j.at("bg").get<std::string>());
  if (!shape) throw fail("shape");
  if (!color) throw fail("color");
  if (!size) throw fail("size");
  if (!bg) throw fail("bg");
  s.shape = *shape;
  s.color = *color;
  s.size = *size;
  s.bg = *bg;
  s.row_offset = j.at("row_offset").get<int>();
  s.col_offset = j.at("col_offset").get<int>();
  return s;
}

std::optional<Split> split_from_name(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

ordered_json caption_to_json(const CaptionRecord& c) {
  ordered_json j;
  j["caption_id"] = c.caption_id;
  j["image_id"] = c.image_id;
  j["tokens"] = c.tokens;
  j["pos_tags"] = c.pos_tags;
  if (c.class_id) {
    j["class_id"] = *c.class_id;
  } else {
    j["class_id"] = nullptr;
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic rendering

int class_id(Shape shape, Color color) {
  return static_cast<int>(shape) * kNumColors + static_cast<int>(color);
}

int side_length(Size size, int resolution) {
  switch (size) {
    case Size::kSmall:
      return resolution / 4;
    case Size::kMedium:
      return (resolution * 3) / 8;
    case Size::kLarge:
      return resolution / 2;
  }
  return 0;
}

int max_jitter(int resolution) {
  return (resolution - side_length(Size::kLarge, resolution)) / 2 - resolution / 16;
}

Image render_synthetic(const SynthAttrSpec& spec, int resolution) {
  if (resolution < 8 || !is_power_of_two(resolution)) {
    throw InvalidInput("resolution must be a power of two >= 8, got " + std::to_string(resolution));
  }
  const int side = side_length(spec.size, resolution);
  const int cy = resolution / 2 + spec.row_offset;
  const int cx = resolution / 2 + spec.col_offset;
  const int half = side / 2;
  if (cy - half < 0 || cx - half < 0 || cy + half > resolution || cx + half > resolution) {
    throw InvalidInput("shape does not fit the canvas at offset (" + std::to_string(spec.row_offset) + "," +
                       std::to_string(spec.col_offset) + ")");
  }
  const auto bg = kBackgroundPalette[static_cast<std::size_t>(spec.bg)];
  const auto fg = kColorPalette[static_cast<std::size_t>(spec.color)];
  Image img(resolution, resolution);
  img.fill(bg.r / 255.0f, bg.g / 255.0f, bg.b / 255.0f);
  for (int row = cy - half; row < cy + half; ++row) {
    for (int col = cx - half; col < cx + half; ++col) {
      if (inside_shape(spec.shape, col + 0.5, row + 0.5, cx, cy, half)) {
        img.at(row, col, 0) = fg.r / 255.0f;
        img.at(row, col, 1) = fg.g / 255.0f;
        img.at(row, col, 2) = fg.b / 255.0f;
      }
    }
  }
  return img;
}

SynthAttrSpec sample_spec(int resolution, Rng& rng) {
  const int jitter = max_jitter(resolution);
  SynthAttrSpec s;
  s.shape = static_cast<Shape>(uniform_index(rng, kNumShapes));
  s.color = static_cast<Color>(uniform_index(rng, kNumColors));
  s.size = static_cast<Size>(uniform_index(rng, kNumSizes));
  s.bg = static_cast<Background>(uniform_index(rng, kNumBackgrounds));
  s.row_offset = static_cast<int>(uniform_index(rng, 2 * jitter + 1)) - jitter;
  s.col_offset = static_cast<int>(uniform_index(rng, 2 * jitter + 1)) - jitter;
  return s;
}

std::vector<SynthAttrSpec> sample_specs(int count, int resolution, Rng& rng) {
  std::vector<SynthAttrSpec> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_spec(resolution, rng));
  return out;
}

std::vector<std::string> caption_tokens(const Attributes& a) {
  return {"a", name_of(kSizeNames, a.size), name_of(kColorNames, a.color), name_of(kShapeNames, a.shape),
          "on", "a", name_of(kBackgroundNames, a.bg), "background"};
}

std::optional<Shape> shape_from_name(std::string_view s) { return enum_from_name<Shape>(kShapeNames, s); }
std::optional<Color> color_from_name(std::string_view s) { return enum_from_name<Color>(kColorNames, s); }
std::optional<Size> size_from_name(std::string_view s) { return enum_from_name<Size>(kSizeNames, s); }
std::optional<Background> background_from_name(std::string_view s) {
  return enum_from_name<Background>(kBackgroundNames, s);
}

ParsedCaption parse_caption(const std::vector<std::string>& tokens) {
  std::set<Shape> shapes;
  std::set<Color> colors;
  std::set<Size> sizes;
  std::set<Background> bgs;
  for (const auto& t : tokens) {
    if (auto v = shape_from_name(t)) shapes.insert(*v);
    if (auto v = color_from_name(t)) colors.insert(*v);
    if (auto v = size_from_name(t)) sizes.insert(*v);
    if (auto v = background_from_name(t)) bgs.insert(*v);
  }
  ParsedCaption p;
  if (shapes.size() == 1) p.shape = *shapes.begin();
  if (colors.size() == 1) p.color = *colors.begin();
  if (sizes.size() == 1) p.size = *sizes.begin();
  if (bgs.size() == 1) p.bg = *bgs.begin();
  return p;
}

// ---------------------------------------------------------------------------
// Vocabularies and tagging

void validate_caption(const CaptionRecord& r) {
  using K = ValidationError::Kind;
  if (r.tokens.empty()) throw ValidationError(K::kAlignment, "caption " + r.caption_id + " has no tokens");
  if (r.tokens.size() != r.pos_tags.size()) {
    throw ValidationError(K::kAlignment, "caption " + r.caption_id + " has " + std::to_string(r.tokens.size()) +
                                             " tokens but " + std::to_string(r.pos_tags.size()) + " pos tags");
  }
  for (const auto& t : r.tokens) {
    if (t.empty() || std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw ValidationError(K::kAlignment, "caption " + r.caption_id + " has an empty or whitespace token");
    }
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw InvalidInput("duplicate vocabulary token " + tokens_[i]);
  }
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& PosVocabulary::tokens_for(const std::string& tag) const {
  static const std::vector<std::string> kEmpty;
  auto it = by_tag.find(tag);
  return it == by_tag.end() ? kEmpty : it->second;
}

Vocabulary build_vocab(const std::vector<CaptionRecord>& captions) {
  if (captions.empty()) throw InvalidInput("build_vocab: empty corpus");
  std::vector<std::string> tokens;
  std::set<std::string> seen;
  for (const auto& c : captions) {
    for (const auto& t : c.tokens) {
      if (seen.insert(t).second) tokens.push_back(t);
    }
  }
  return Vocabulary(std::move(tokens));
}

PosVocabulary build_pos_vocab(const std::vector<CaptionRecord>& captions) {
  if (captions.empty()) throw InvalidInput("build_pos_vocab: empty corpus");
  PosVocabulary out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : captions) {
    if (c.pos_tags.size() != c.tokens.size()) {
      throw ValidationError(ValidationError::Kind::kAlignment, "caption " + c.caption_id + " lacks pos tags");
    }
    for (std::size_t i = 0; i < c.tokens.size(); ++i) {
      if (seen.emplace(c.pos_tags[i], c.tokens[i]).second) out.by_tag[c.pos_tags[i]].push_back(c.tokens[i]);
    }
  }
  return out;
}

const Lexicon& template_lexicon() {
  static const Lexicon lex = [] {
    Lexicon l;
    for (auto s : kSizeNames) l.emplace(s, "ADJ");
    for (auto s : kColorNames) l.emplace(s, "ADJ");
    for (auto s : kBackgroundNames) l.emplace(s, "ADJ");
    for (auto s : kShapeNames) l.emplace(s, "NOUN");
    l.emplace("background", "NOUN");
    l.emplace("a", "DET");
    l.emplace("on", "ADP");
    return l;
  }();
  return lex;
}

std::vector<std::string> tag_pos(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = lexicon.find(t);
    tags.push_back(it == lexicon.end() ? std::string(kUnknownTag) : it->second);
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

void DatasetManifest::reindex() {
  caption_index_.clear();
  pair_index_.clear();
  for (std::size_t i = 0; i < captions.size(); ++i) caption_index_.emplace(captions[i].caption_id, i);
  for (std::size_t i = 0; i < pairs.size(); ++i) pair_index_.emplace(pairs[i].pair_id, i);
}

std::vector<const PairRecord*> DatasetManifest::pairs_in(Split split) const {
  std::vector<const PairRecord*> out;
  for (const auto& p : pairs) {
    if (p.split == split) out.push_back(&p);
  }
  return out;
}

const CaptionRecord& DatasetManifest::caption(const std::string& caption_id) const {
  auto it = caption_index_.find(caption_id);
  if (it == caption_index_.end()) throw InvalidInput("unknown caption id " + caption_id);
  return captions[it->second];
}

const PairRecord& DatasetManifest::pair(const std::string& pair_id) const {
  auto it = pair_index_.find(pair_id);
  if (it == pair_index_.end()) throw InvalidInput("unknown pair id " + pair_id);
  return pairs[it->second];
}

std::filesystem::path DatasetManifest::image_path(const std::string& image_id) const {
  return dir / "images" / (image_id + ".png");
}

Image DatasetManifest::load_image(const std::string& image_id) const {
  Image img = read_png(image_path(image_id));
  if (img.height() != resolution || img.width() != resolution) {
    throw ValidationError(ValidationError::Kind::kSchema,
                          "image " + image_id + " is not at the declared resolution");
  }
  return img;
}

std::vector<std::string> DatasetManifest::image_ids(Split split) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (p.split == split && seen.insert(p.image_id).second) out.push_back(p.image_id);
  }
  return out;
}

std::string manifest_json(const DatasetManifest& m) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["name"] = m.name;
  j["resolution"] = m.resolution;
  j["synthetic"] = m.synthetic;
  if (m.synthetic) {
    ordered_json palette;
    for (int i = 0; i < kNumColors; ++i) {
      const auto c = kColorPalette[i];
      palette["shape_colors"][std::string(kColorNames[i])] = {c.r, c.g, c.b};
    }
    for (int i = 0; i < kNumBackgrounds; ++i) {
      const auto c = kBackgroundPalette[i];
      palette["backgrounds"][std::string(kBackgroundNames[i])] = {c.r, c.g, c.b};
    }
    for (int i = 0; i < kNumSizes; ++i) {
      palette["side_lengths"][std::string(kSizeNames[i])] = side_length(static_cast<Size>(i), m.resolution);
    }
    j["palette"] = palette;
  }
  ordered_json splits;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    auto ids = ordered_json::array();
    for (const auto* p : m.pairs_in(s)) ids.push_back(p->pair_id);
    splits[std::string(split_name(s))] = ids;
  }
  j["splits"] = splits;
  auto pairs = ordered_json::array();
  for (const auto& p : m.pairs) {
    ordered_json pj;
    pj["pair_id"] = p.pair_id;
    pj["caption_id"] = p.caption_id;
    pj["image_id"] = p.image_id;
    if (p.class_id) pj["class_id"] = *p.class_id;
    if (p.attrs) pj["attrs"] = attrs_to_json(*p.attrs);
    pairs.push_back(pj);
  }
  j["pairs"] = pairs;
  j["vocab_path"] = m.vocab_path;
  j["pos_vocab_path"] = m.pos_vocab_path;
  return j.dump(2) + "\n";
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["tokens"] = vocab.tokens();
  write_text(path, j.dump(2) + "\n");
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError(ValidationError::Kind::kMissingFile, "missing vocabulary file " + path.string());
  }
  try {
    auto j = nlohmann::json::parse(read_text(path));
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(ValidationError::Kind::kSchema, "bad vocabulary file " + path.string() + ": " + e.what());
  }
}

void save_pos_vocab(const PosVocabulary& vocab, const std::filesystem::path& path) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  ordered_json by_tag = ordered_json::object();
  for (const auto& [tag, tokens] : vocab.by_tag) by_tag[tag] = tokens;
  j["by_tag"] = by_tag;
  write_text(path, j.dump(2) + "\n");
}

PosVocabulary load_pos_vocab(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError(ValidationError::Kind::kMissingFile, "missing pos vocabulary file " + path.string());
  }
  try {
    auto j = nlohmann::json::parse(read_text(path));
    PosVocabulary v;
    for (const auto& [tag, tokens] : j.at("by_tag").items()) {
      v.by_tag[tag] = tokens.get<std::vector<std::string>>();
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(ValidationError::Kind::kSchema, "bad pos vocabulary " + path.string() + ": " + e.what());
  }
}

void save_dataset_metadata(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "manifest.json", manifest_json(m));
  std::ostringstream lines;
  for (const auto& c : m.captions) lines << caption_to_json(c).dump() << "\n";
  write_text(dir / "captions.jsonl", lines.str());

  std::vector<CaptionRecord> train_captions;
  for (const auto* p : m.pairs_in(Split::kTrain)) train_captions.push_back(m.caption(p->caption_id));
  if (train_captions.empty()) train_captions = m.captions;
  save_vocab(build_vocab(train_captions), dir / m.vocab_path);
  save_pos_vocab(build_pos_vocab(train_captions), dir / m.pos_vocab_path);
}

DatasetManifest generate_synth_dataset(const SynthConfig& config, std::uint64_t seed,
                                       const std::filesystem::path& dir) {
  if (config.train <= 0 || config.val <= 0 || config.test <= 0) {
    throw InvalidInput("dataset split counts must all be positive");
  }
  if (config.captions_per_image <= 0) throw InvalidInput("captions_per_image must be positive");
  if (config.split_mode == SplitMode::kClass &&
      (config.held_out_classes <= 0 || config.held_out_classes >= kNumClasses)) {
    throw InvalidInput("held_out_classes must lie in (0, 24)");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw Error("cannot create dataset directory " + dir.string() + ": " + ec.message());

  // Classes held out for the test split in class mode.
  std::set<int> held_out;
  if (config.split_mode == SplitMode::kClass) {
    Rng crng = make_rng(seed, "dataset/held_out_classes");
    std::vector<int> all(kNumClasses);
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < config.held_out_classes; ++i) {
      const std::size_t j = i + uniform_index(crng, all.size() - i);
      std::swap(all[i], all[j]);
      held_out.insert(all[i]);
    }
  }

  DatasetManifest m;
  m.name = config.name;
  m.resolution = config.resolution;
  m.synthetic = true;
  m.dir = dir;

  Rng rng = make_rng(seed, "dataset/samples");
  const auto draw_spec = [&](Split split) {
    for (;;) {
      const SynthAttrSpec s = sample_spec(config.resolution, rng);
      if (config.split_mode == SplitMode::kClass) {
        const bool is_held_out = held_out.count(class_id(s.shape, s.color)) > 0;
        if (is_held_out != (split == Split::kTest)) continue;
      }
      return s;
    }
  };

  int image_counter = 0;
  int caption_counter = 0;
  for (auto [split, count] : {std::pair{Split::kTrain, config.train}, std::pair{Split::kVal, config.val},
                              std::pair{Split::kTest, config.test}}) {
    for (int i = 0; i < count; ++i) {
      const SynthAttrSpec spec = draw_spec(split);
      const std::string image_id = format_id('i', image_counter++);
      write_png(m.image_path(image_id), render_synthetic(spec, config.resolution));
      const int cls = class_id(spec.shape, spec.color);
      for (int k = 0; k < config.captions_per_image; ++k) {
        const int n = caption_counter++;
        CaptionRecord c;
        c.caption_id = format_id('c', n);
        c.image_id = image_id;
        c.tokens = caption_tokens(spec.attributes());
        c.pos_tags = tag_pos(c.tokens, template_lexicon());
        c.class_id = cls;
        m.captions.push_back(c);
        m.pairs.push_back(PairRecord{format_id('p', n), c.caption_id, image_id, split, cls, spec});
      }
    }
  }
  m.reindex();
  save_dataset_metadata(m, dir);
  return m;
}

DatasetManifest load_dataset(const std::filesystem::path& dir) {
  using K = ValidationError::Kind;
  const auto manifest_path = dir / "manifest.json";
  const auto captions_path = dir / "captions.jsonl";
  for (const auto& p : {manifest_path, captions_path}) {
    if (!std::filesystem::exists(p)) throw ValidationError(K::kMissingFile, "missing dataset file " + p.string());
  }
  DatasetManifest m;
  m.dir = dir;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(K::kSchema, std::string("manifest.json is not valid JSON: ") + e.what());
  }
  std::map<std::string, Split> split_of;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw ValidationError(K::kSchema, "unsupported manifest schema_version " + std::to_string(m.schema_version));
    }
    m.name = j.at("name").get<std::string>();
    m.resolution = j.at("resolution").get<int>();
    m.synthetic = j.value("synthetic", false);
    m.vocab_path = j.at("vocab_path").get<std::string>();
    m.pos_vocab_path = j.at("pos_vocab_path").get<std::string>();
    for (const auto& [name, ids] : j.at("splits").items()) {
      auto split = split_from_name(name);
      if (!split) throw ValidationError(K::kSchema, "unknown split " + name);
      for (const auto& id : ids) {
        if (!split_of.emplace(id.get<std::string>(), *split).second) {
          throw ValidationError(K::kSplitOverlap, "pair " + id.get<std::string>() + " appears in more than one split");
        }
      }
    }
    for (const auto& pj : j.at("pairs")) {
      PairRecord p;
      p.pair_id = pj.at("pair_id").get<std::string>();
      p.caption_id = pj.at("caption_id").get<std::string>();
      p.image_id = pj.at("image_id").get<std::string>();
      if (pj.contains("class_id")) p.class_id = pj.at("class_id").get<int>();
      if (pj.contains("attrs")) p.attrs = attrs_from_json(pj.at("attrs"), p.pair_id);
      auto it = split_of.find(p.pair_id);
      if (it == split_of.end()) throw ValidationError(K::kDanglingReference, "pair " + p.pair_id + " is in no split");
      p.split = it->second;
      m.pairs.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(K::kSchema, std::string("manifest.json schema error: ") + e.what());
  }
  if (m.resolution < 8 || !is_power_of_two(m.resolution)) {
    throw ValidationError(K::kSchema, "resolution must be a power of two >= 8");
  }

  std::ifstream in(captions_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    CaptionRecord c;
    try {
      auto cj = nlohmann::json::parse(line);
      c.caption_id = cj.at("caption_id").get<std::string>();
      c.image_id = cj.at("image_id").get<std::string>();
      c.tokens = cj.at("tokens").get<std::vector<std::string>>();
      c.pos_tags = cj.at("pos_tags").get<std::vector<std::string>>();
      if (cj.contains("class_id") && !cj.at("class_id").is_null()) c.class_id = cj.at("class_id").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(K::kSchema, "captions.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    validate_caption(c);
    m.captions.push_back(std::move(c));
  }
  m.reindex();

  std::set<std::string> caption_ids;
  for (const auto& c : m.captions) {
    if (!caption_ids.insert(c.caption_id).second) {
      throw ValidationError(K::kSchema, "duplicate caption id " + c.caption_id);
    }
  }
  for (const auto& [pair_id, split] : split_of) {
    try {
      (void)m.pair(pair_id);
    } catch (const InvalidInput&) {
      throw ValidationError(K::kDanglingReference, "split references unknown pair " + pair_id);
    }
  }
  std::set<std::string> checked_images;
  for (const auto& p : m.pairs) {
    if (caption_ids.count(p.caption_id) == 0) {
      throw ValidationError(K::kDanglingReference, "pair " + p.pair_id + " references missing caption " + p.caption_id);
    }
    if (m.caption(p.caption_id).image_id != p.image_id) {
      throw ValidationError(K::kDanglingReference, "pair " + p.pair_id + " disagrees with caption " + p.caption_id +
                                                       " about its image");
    }
    if (checked_images.insert(p.image_id).second && !std::filesystem::exists(m.image_path(p.image_id))) {
      throw ValidationError(K::kDanglingReference, "pair " + p.pair_id + " references missing image " + p.image_id);
    }
  }
  for (const auto& f : {m.vocab_path, m.pos_vocab_path}) {
    if (!std::filesystem::exists(dir / f)) throw ValidationError(K::kMissingFile, "missing dataset file " + f);
  }
  return m;
}

}  // namespace pcda::datakit
