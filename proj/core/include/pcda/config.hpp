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

#include "pcda/aligner.hpp"
#include "pcda/augmentor.hpp"
#include "pcda/datakit.hpp"
#include "pcda/evalkit.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/oracle.hpp"
#include "pcda/projector.hpp"
#include "pcda/retriever.hpp"

namespace pcda {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExtractorKind { kOracleTrunk, kRandomConv };

struct DatasetSection {
  std::string path;  // external dataset directory; empty generates the synthetic set
  datakit::SynthConfig synth;
};

struct ProjectionSection {
  projector::ProjectionConfig config;
  ExtractorKind extractor = ExtractorKind::kOracleTrunk;
  int w_stats_samples = 10000;
};

struct AugmentationSection {
  augmentor::ReplacementConfig replacement{0.7};
  double scale = 1.0;
  bool offline = false;
  int semantic_samples = 200;
};

struct EvalSection {
  evalkit::ProtocolConfig protocol;
  std::optional<std::uint64_t> seed;  // defaults to a stream derived from the root seed
  std::vector<double> montage_rates = {0.0, 0.3, 0.7, 1.0};
  int montage_examples = 4;
};

struct AblationSection {
  std::vector<double> r_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::uint64_t> seeds = {1};
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 7;
  std::string artifact_root = "artifacts";
  DatasetSection dataset;
  datakit::OracleConfig oracle;
  ganlite::GanConfig gan;
  ProjectionSection projection;
  aligner::AlignConfig alignment;
  AugmentationSection augmentation;
  retriever::RetrievalConfig retrieval;  // replacement and aug_scale come from the augmentation section
  EvalSection eval;
  AblationSection ablation;

  // Cross-section checks (e.g. aligner output size equals the generator's
  // w size). Throws ConfigError.
  void validate() const;
};

// Parses YAML; unknown keys, wrong types and out-of-range values raise
// ConfigError naming the offending key.
PipelineConfig parse_config(const std::string& yaml_text);
PipelineConfig load_config(const std::filesystem::path& path);
// Canonical YAML rendering; parse_config(to_yaml(c)) reproduces c.
std::string to_yaml(const PipelineConfig& config);

// Named presets: quickstart, acceptance, paper-table1, paper-table2,
// paper-table3. Throws ConfigError for other names.
PipelineConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace pcda
