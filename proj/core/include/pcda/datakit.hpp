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

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pcda/image.hpp"
#include "pcda/seed.hpp"

namespace pcda::datakit {

inline constexpr int kSchemaVersion = 1;

enum class Shape { kCircle, kSquare, kTriangle, kCross };
enum class Color { kRed, kGreen, kBlue, kYellow, kPurple, kOrange };
enum class Size { kSmall, kMedium, kLarge };
enum class Background { kWhite, kGray, kBlack };

inline constexpr int kNumShapes = 4;
inline constexpr int kNumColors = 6;
inline constexpr int kNumSizes = 3;
inline constexpr int kNumBackgrounds = 3;
inline constexpr int kNumClasses = kNumShapes * kNumColors;

struct Rgb8 {
  std::uint8_t r, g, b;
};

inline constexpr std::array<std::string_view, kNumShapes> kShapeNames = {"circle", "square", "triangle", "cross"};
inline constexpr std::array<std::string_view, kNumColors> kColorNames = {"red", "green", "blue",
                                                                         "yellow", "purple", "orange"};
inline constexpr std::array<std::string_view, kNumSizes> kSizeNames = {"small", "medium", "large"};
inline constexpr std::array<std::string_view, kNumBackgrounds> kBackgroundNames = {"white", "gray", "black"};

inline constexpr std::array<Rgb8, kNumColors> kColorPalette = {{
    {220, 30, 30},    // red
    {30, 170, 40},    // green
    {40, 70, 220},    // blue
    {235, 215, 30},   // yellow
    {150, 50, 180},   // purple
    {245, 130, 20},   // orange
}};
inline constexpr std::array<Rgb8, kNumBackgrounds> kBackgroundPalette = {{
    {245, 245, 245},  // white
    {128, 128, 128},  // gray
    {15, 15, 15},     // black
}};

// Attribute tuple of a synthetic render, position excluded.
struct Attributes {
  Shape shape = Shape::kCircle;
  Color color = Color::kRed;
  Size size = Size::kSmall;
  Background bg = Background::kWhite;
  bool operator==(const Attributes&) const = default;
};

struct SynthAttrSpec {
  Shape shape = Shape::kCircle;
  Color color = Color::kRed;
  Size size = Size::kSmall;
  Background bg = Background::kWhite;
  int row_offset = 0;  // shape center relative to the canvas center, pixels
  int col_offset = 0;

  Attributes attributes() const { return {shape, color, size, bg}; }
  bool operator==(const SynthAttrSpec&) const = default;
};

// Class id of a (shape, color) pair, in [0, 24).
int class_id(Shape shape, Color color);
inline int class_id(const Attributes& a) { return class_id(a.shape, a.color); }

// Side length (bounding box edge) in pixels of a size at a resolution.
int side_length(Size size, int resolution);
// Largest |offset| for which every size still fits on the canvas.
int max_jitter(int resolution);

// Deterministic raster: bg fill plus one hard-edged shape. Throws InvalidInput
// when the shape's bounding box leaves the canvas or the resolution is not a
// power of two >= 8.
Image render_synthetic(const SynthAttrSpec& spec, int resolution);

// Uniform attribute draw with position jitter in [-max_jitter, max_jitter].
SynthAttrSpec sample_spec(int resolution, Rng& rng);
std::vector<SynthAttrSpec> sample_specs(int count, int resolution, Rng& rng);

std::vector<std::string> caption_tokens(const Attributes& attrs);

// Per-slot parse of a caption against the attribute vocabularies. A slot is
// filled only when exactly one distinct word of that attribute occurs.
struct ParsedCaption {
  std::optional<Shape> shape;
  std::optional<Color> color;
  std::optional<Size> size;
  std::optional<Background> bg;
};
ParsedCaption parse_caption(const std::vector<std::string>& tokens);

std::optional<Shape> shape_from_name(std::string_view s);
std::optional<Color> color_from_name(std::string_view s);
std::optional<Size> size_from_name(std::string_view s);
std::optional<Background> background_from_name(std::string_view s);

// ---------------------------------------------------------------------------
// Records and vocabularies

struct CaptionRecord {
  std::string caption_id;
  std::string image_id;
  std::vector<std::string> tokens;
  std::vector<std::string> pos_tags;
  std::optional<int> class_id;
};

// Throws ValidationError(kAlignment) naming the caption on a token/tag
// mismatch, empty caption, or a token containing whitespace.
void validate_caption(const CaptionRecord& record);

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  // Ordinal of the token, or nullopt for out-of-vocabulary words.
  std::optional<std::size_t> find(const std::string& token) const;
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PosVocabulary {
  std::map<std::string, std::vector<std::string>> by_tag;

  // Tokens for a tag; empty when the tag never occurs.
  const std::vector<std::string>& tokens_for(const std::string& tag) const;
  bool operator==(const PosVocabulary&) const = default;
};

Vocabulary build_vocab(const std::vector<CaptionRecord>& captions);
PosVocabulary build_pos_vocab(const std::vector<CaptionRecord>& captions);

using Lexicon = std::map<std::string, std::string, std::less<>>;
inline constexpr std::string_view kUnknownTag = "UNK";

// Lexicon covering the caption template: sizes, colors, and bg colors are
// ADJ; shapes and "background" are NOUN; "a" is DET; "on" is ADP.
const Lexicon& template_lexicon();
std::vector<std::string> tag_pos(const std::vector<std::string>& tokens, const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Datasets on disk

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);

struct PairRecord {
  std::string pair_id;
  std::string caption_id;
  std::string image_id;
  Split split = Split::kTrain;
  std::optional<int> class_id;
  std::optional<SynthAttrSpec> attrs;  // present for synthetic datasets
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::string name;
  int resolution = 0;
  bool synthetic = false;
  std::vector<PairRecord> pairs;
  std::vector<CaptionRecord> captions;  // contents of captions.jsonl
  std::string vocab_path = "vocab.json";
  std::string pos_vocab_path = "pos_vocab.json";
  std::filesystem::path dir;  // not serialized

  std::vector<const PairRecord*> pairs_in(Split split) const;
  const CaptionRecord& caption(const std::string& caption_id) const;
  const PairRecord& pair(const std::string& pair_id) const;
  std::filesystem::path image_path(const std::string& image_id) const;
  Image load_image(const std::string& image_id) const;
  // Distinct image ids of a split, in pair order.
  std::vector<std::string> image_ids(Split split) const;

  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> caption_index_;
  std::unordered_map<std::string, std::size_t> pair_index_;
};

enum class SplitMode { kInstance, kClass };

struct SynthConfig {
  std::string name = "synthshapes";
  int resolution = 64;
  int train = 600;
  int val = 100;
  int test = 100;
  int captions_per_image = 1;
  SplitMode split_mode = SplitMode::kInstance;
  int held_out_classes = 6;  // class split mode only
};

// Draws every image's attributes uniformly, jitters its position, renders it,
// captions it from the template, and writes the dataset directory. Throws
// InvalidInput on zero counts and Error when `dir` is not writable.
DatasetManifest generate_synth_dataset(const SynthConfig& config, std::uint64_t seed,
                                       const std::filesystem::path& dir);

// Validating loader. Each failure is a ValidationError naming the record.
DatasetManifest load_dataset(const std::filesystem::path& dir);

// Writes manifest.json, captions.jsonl, vocab.json, pos_vocab.json (not images).
void save_dataset_metadata(const DatasetManifest& manifest, const std::filesystem::path& dir);
std::string manifest_json(const DatasetManifest& manifest);

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);
void save_pos_vocab(const PosVocabulary& vocab, const std::filesystem::path& path);
PosVocabulary load_pos_vocab(const std::filesystem::path& path);

}  // namespace pcda::datakit
