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
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pcda/augmentor.hpp"
#include "pcda/datakit.hpp"
#include "pcda/image.hpp"
#include "pcda/metrics.hpp"
#include "pcda/oracle.hpp"
#include "pcda/retriever.hpp"

namespace pcda::evalkit {

struct DirectionMetrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  std::optional<double> rp;
};

struct MetricsReport {
  std::string protocol;  // "instance" or "class"
  std::uint64_t seed = 0;
  int n = 0;
  int repeats = 0;
  DirectionMetrics i2t, t2i;
  DirectionMetrics i2t_stderr, t2i_stderr;
  std::vector<DirectionMetrics> i2t_repeats, t2i_repeats;
  std::vector<std::string> notes;
};

struct ProtocolConfig {
  int n = 1000;
  int repeats = 10;
  retriever::Level level = retriever::Level::kInstance;
};

// Embedded split: unit-norm rows with aligned pair and class labels.
struct EmbeddedSplit {
  torch::Tensor f_img, f_txt;
  std::vector<int> classes;
};

EmbeddedSplit embed_split(retriever::RetrievalEncoders& enc, const datakit::DatasetManifest& manifest,
                          datakit::Split split);

// Each repeat samples n pairs without replacement and scores both directions
// against the sampled partners (class members at class level). n is clamped
// to the split size with a note. Throws InvalidInput on an empty split.
MetricsReport sampled_recall_protocol(const EmbeddedSplit& split, const ProtocolConfig& config, std::uint64_t seed);
MetricsReport sampled_recall_protocol(retriever::RetrievalEncoders& enc, const datakit::DatasetManifest& manifest,
                                      datakit::Split split, const ProtocolConfig& config, std::uint64_t seed);

struct AttributeScore {
  int correct = 0;
  int scored = 0;
  int total = 0;
  double accuracy() const { return scored == 0 ? 0.0 : static_cast<double>(correct) / scored; }
  double coverage() const { return total == 0 ? 0.0 : static_cast<double>(scored) / total; }
};

struct SemanticScore {
  AttributeScore shape, color, size, bg;
};

// Compares every unambiguous caption slot with the oracle's reading of the
// paired image.
SemanticScore semantic_consistency_score(const std::vector<std::vector<std::string>>& captions,
                                         const torch::Tensor& images, datakit::AttributeOracle& oracle);
SemanticScore semantic_consistency_score(const std::vector<augmentor::AugmentedPair>& pairs,
                                         datakit::AttributeOracle& oracle);

// metrics.json (fixed key order, 4 decimals) and metrics.csv.
std::string metrics_json(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& dir);
// Number of rows write_report puts in metrics.csv, header excluded.
std::size_t metric_entry_count(const MetricsReport& report);

// Grid of equally sized tiles, rows x cols, separated by a 2-pixel gutter.
Image montage(const std::vector<std::vector<Image>>& rows);
// One row per example: the real image, then I' for each r. Captions go to a
// text file next to the PNG.
void write_montage(const std::vector<std::vector<Image>>& rows, const std::vector<std::vector<std::string>>& captions,
                   const std::filesystem::path& png_path);

}  // namespace pcda::evalkit
