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
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcda/config.hpp"

namespace pcda {

std::string_view version_string();

// Environment variable that overrides the configured artifact root.
inline constexpr const char* kArtifactRootEnv = "PCDA_ARTIFACT_ROOT";

// Precedence: explicit override, then the environment, then the config.
std::filesystem::path resolve_artifact_root(const PipelineConfig& config,
                                            const std::optional<std::filesystem::path>& override_root = {});

struct RunManifest {
  std::string stage;
  std::string version;
  std::string stage_key;  // digest of the stage's config and input hashes
  std::map<std::string, std::string> inputs;  // upstream stage -> output hash
  std::vector<std::string> outputs;
  std::string output_hash;
  std::string config_snapshot;
  std::string started_at, finished_at;
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct StageSummary {
  std::string stage;
  bool skipped = false;
  std::filesystem::path output;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();
  double seconds = 0.0;
};

nlohmann::ordered_json summary_json(const StageSummary& s);

enum class AblationGrid { kReplacementRate, kStrategy, kTable3 };
AblationGrid ablation_grid_from_name(std::string_view name);  // r | strategy | table3
std::string_view ablation_grid_name(AblationGrid g);

struct AblationArm {
  std::string label;
  retriever::TrainMode mode = retriever::TrainMode::kJoint;
  augmentor::ReplacementConfig replacement;
  double scale = 1.0;
};

std::vector<AblationArm> ablation_arms(AblationGrid grid, const PipelineConfig& config);

struct AblationRow {
  AblationArm arm;
  std::vector<double> seed_r1, seed_r5, seed_r10;  // image-to-text, one per seed
  double r1 = 0, r5 = 0, r10 = 0;                  // medians over seeds
};

struct AblationTable {
  AblationGrid grid = AblationGrid::kReplacementRate;
  std::vector<AblationRow> rows;
};

double median(std::vector<double> v);
std::string ablation_csv(const AblationTable& t);
std::string ablation_markdown(const AblationTable& t);

// Stage runner over one artifact root. Every stage checks its upstream
// manifests and output hashes first, and is skipped when its own manifest
// already matches the current config and inputs.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path root, bool force = false, std::ostream* log = nullptr);

  StageSummary make_data();
  StageSummary train_oracle();
  StageSummary train_gan();
  StageSummary project();
  StageSummary train_align();
  StageSummary augment();
  StageSummary train_retrieval();
  StageSummary evaluate();
  StageSummary report();
  std::vector<StageSummary> run_all();

  AblationTable ablate(AblationGrid grid);
  // Same runner over caller-chosen arms.
  AblationTable ablate(AblationGrid grid, const std::vector<AblationArm>& arms);

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path stage_dir(const std::string& stage) const;
  std::filesystem::path data_dir() const;
  std::filesystem::path manifest_path(const std::string& stage) const;
  std::uint64_t stage_seed(const std::string& stage) const;

  // Loaders for finished artifacts (after hash validation).
  datakit::DatasetManifest load_data() const;
  datakit::AttributeOracle load_oracle() const;
  ganlite::GanModel load_gan() const;
  projector::LatentStore load_latents() const;
  aligner::AlignmentModel load_alignment() const;

 private:
  using Body = std::function<void(const std::filesystem::path& out, nlohmann::ordered_json& details)>;
  StageSummary run_stage(const std::string& stage, const std::vector<std::string>& upstream,
                         const std::vector<std::string>& sections, const Body& body);
  std::string current_output_hash(const std::string& stage) const;
  RunManifest require_upstream(const std::string& stage) const;
  std::string section_text(const std::vector<std::string>& sections) const;
  std::vector<std::string> retrieval_upstream() const;
  void log(const std::string& line) const;

  PipelineConfig config_;
  std::filesystem::path root_;
  bool force_;
  std::ostream* log_;
};

}  // namespace pcda
