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

#include "pcda/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "pcda/error.hpp"
#include "pcda/hashing.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

#ifndef PCDA_VERSION
#define PCDA_VERSION "0.0.0"
#endif
#ifndef PCDA_GIT_REVISION
#define PCDA_GIT_REVISION "unknown"
#endif

namespace fs = std::filesystem;

namespace pcda {
namespace {

constexpr const char* kStageKeyFile = ".stage_key";

std::string command_for(const std::string& stage) {
  static const std::map<std::string, std::string> kCommands = {
      {"data", "make-data"},   {"oracle", "train-oracle"},  {"gan", "train-gan"},
      {"latents", "project"},  {"align", "train-align"},    {"augment", "augment"},
      {"retrieval", "train-retrieval"}, {"eval", "evaluate"}, {"report", "report"}};
  auto it = kCommands.find(stage);
  return it == kCommands.end() ? stage : it->second;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Tree digest that ignores the stage key marker and, for datasets, any
// offline augmentation output stored alongside.
std::string tree_hash(const fs::path& dir) {
  if (!fs::exists(dir)) return "";
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir);
    const auto first = rel.begin()->string();
    if (first == kStageKeyFile || first == "augpairs") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += f.generic_string();
    acc.push_back('\0');
    acc += sha256_file(dir / f);
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

double get_metric(const nlohmann::json& j, const char* dir, const char* key) { return j.at(dir).at(key).get<double>(); }

std::string slug(const std::string& label) {
  std::string s;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') {
      s.push_back(c);
    } else if (!s.empty() && s.back() != '_') {
      s.push_back('_');
    }
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string_view version_string() {
  static const std::string v = std::string(PCDA_VERSION) + "+" + PCDA_GIT_REVISION;
  return v;
}

fs::path resolve_artifact_root(const PipelineConfig& config, const std::optional<fs::path>& override_root) {
  if (override_root) return *override_root;
  if (const char* env = std::getenv(kArtifactRootEnv); env != nullptr && *env != '\0') return env;
  return config.artifact_root;
}

nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["version"] = m.version;
  j["stage_key"] = m.stage_key;
  j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.inputs) j["inputs"][k] = v;
  j["outputs"] = m.outputs;
  j["output_hash"] = m.output_hash;
  j["config_snapshot"] = m.config_snapshot;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.stage_key = j.at("stage_key").get<std::string>();
  for (const auto& [k, v] : j.at("inputs").items()) m.inputs[k] = v.get<std::string>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.output_hash = j.at("output_hash").get<std::string>();
  m.config_snapshot = j.at("config_snapshot").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  return m;
}

nlohmann::ordered_json summary_json(const StageSummary& s) {
  nlohmann::ordered_json j;
  j["stage"] = s.stage;
  j["skipped"] = s.skipped;
  j["output"] = s.output.string();
  j["seconds"] = s.seconds;
  j["details"] = s.details;
  return j;
}

AblationGrid ablation_grid_from_name(std::string_view name) {
  if (name == "r") return AblationGrid::kReplacementRate;
  if (name == "strategy") return AblationGrid::kStrategy;
  if (name == "table3") return AblationGrid::kTable3;
  throw ConfigError("unknown ablation grid '" + std::string(name) + "' (expected r, strategy or table3)");
}

std::string_view ablation_grid_name(AblationGrid g) {
  switch (g) {
    case AblationGrid::kReplacementRate: return "r";
    case AblationGrid::kStrategy: return "strategy";
    case AblationGrid::kTable3: return "table3";
  }
  return "r";
}

std::vector<AblationArm> ablation_arms(AblationGrid grid, const PipelineConfig& config) {
  using augmentor::Strategy;
  using retriever::TrainMode;
  const auto base_mode =
      config.retrieval.mode == TrainMode::kBaseline ? TrainMode::kJoint : config.retrieval.mode;
  auto arm = [&](std::string label, TrainMode mode, double r, Strategy s, double scale,
                 std::optional<std::set<std::string>> filter = std::nullopt) {
    AblationArm a;
    a.label = std::move(label);
    a.mode = r == 0.0 && mode != TrainMode::kNoisePair ? TrainMode::kBaseline : mode;
    a.replacement.r = r;
    a.replacement.strategy = s;
    a.replacement.exclude_original = config.augmentation.replacement.exclude_original;
    a.replacement.tag_filter = std::move(filter);
    a.scale = a.mode == TrainMode::kBaseline ? 0.0 : scale;
    return a;
  };
  std::vector<AblationArm> arms;
  switch (grid) {
    case AblationGrid::kReplacementRate:
      for (double r : config.ablation.r_grid) arms.push_back(arm("r=" + fmt(r, 1), base_mode, r, Strategy::kRandom, 1.0));
      break;
    case AblationGrid::kStrategy:
      arms.push_back(arm("random", base_mode, 0.7, Strategy::kRandom, 1.0));
      arms.push_back(arm("all tagging", base_mode, 0.7, Strategy::kPos, 1.0));
      arms.push_back(arm("adj.", base_mode, 0.7, Strategy::kPos, 1.0, std::set<std::string>{"ADJ"}));
      arms.push_back(arm("noun.", base_mode, 0.7, Strategy::kPos, 1.0, std::set<std::string>{"NOUN"}));
      arms.push_back(arm("adj.+noun.", base_mode, 0.7, Strategy::kPos, 1.0, std::set<std::string>{"ADJ", "NOUN"}));
      break;
    case AblationGrid::kTable3:
      arms.push_back(arm("baseline (r=0)", TrainMode::kBaseline, 0.0, Strategy::kRandom, 0.0));
      arms.push_back(arm("best (r=0.7)", TrainMode::kJoint, 0.7, Strategy::kRandom, 1.0));
      arms.push_back(arm("pretrain then finetune (r=0.7)", TrainMode::kPretrainFinetune, 0.7, Strategy::kRandom, 1.0));
      arms.push_back(arm("90% of real data", TrainMode::kJoint, 0.7, Strategy::kRandom, 0.9));
      arms.push_back(arm("110% of real data", TrainMode::kJoint, 0.7, Strategy::kRandom, 1.1));
      arms.push_back(arm("augmented as noise (r=0.2)", TrainMode::kNoisePair, 0.2, Strategy::kRandom, 1.0));
      arms.push_back(arm("augmented as noise (r=0.3)", TrainMode::kNoisePair, 0.3, Strategy::kRandom, 1.0));
      arms.push_back(arm("augmented text only", TrainMode::kTextOnly, 0.7, Strategy::kRandom, 1.0));
      arms.push_back(arm("unpaired image and text", TrainMode::kUnpaired, 0.7, Strategy::kRandom, 1.0));
      break;
  }
  return arms;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of an empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << "setting,mode,r,strategy,scale,R@1,R@5,R@10,seeds\n";
  for (const auto& row : t.rows) {
    os << '"' << row.arm.label << "\"," << retriever::mode_name(row.arm.mode) << ',' << fmt(row.arm.replacement.r, 1)
       << ',' << augmentor::strategy_name(row.arm.replacement.strategy) << ',' << fmt(row.arm.scale, 2) << ','
       << fmt(row.r1) << ',' << fmt(row.r5) << ',' << fmt(row.r10) << ',' << row.seed_r1.size() << '\n';
  }
  return os.str();
}

std::string ablation_markdown(const AblationTable& t) {
  std::ostringstream os;
  os << "| setting | R@1 | R@5 | R@10 |\n|---|---|---|---|\n";
  for (const auto& row : t.rows) {
    os << "| " << row.arm.label << " | " << fmt(row.r1, 1) << " | " << fmt(row.r5, 1) << " | " << fmt(row.r10, 1)
       << " |\n";
  }
  return os.str();
}

Pipeline::Pipeline(PipelineConfig config, fs::path root, bool force, std::ostream* log)
    : config_(std::move(config)), root_(std::move(root)), force_(force), log_(log) {
  config_.gan.resolution = config_.dataset.synth.resolution;
  config_.alignment.d_w = config_.gan.d_w;
  config_.retrieval.replacement = config_.augmentation.replacement;
  config_.retrieval.aug_scale = config_.augmentation.scale;
  config_.validate();
}

fs::path Pipeline::stage_dir(const std::string& stage) const {
  if (stage == "data") return data_dir();
  return root_ / stage;
}

fs::path Pipeline::data_dir() const {
  return config_.dataset.path.empty() ? root_ / "data" : fs::path(config_.dataset.path);
}

fs::path Pipeline::manifest_path(const std::string& stage) const { return root_ / "manifests" / (stage + ".json"); }

std::uint64_t Pipeline::stage_seed(const std::string& stage) const { return derive_seed(config_.seed, "stage/" + stage); }

void Pipeline::log(const std::string& line) const {
  if (log_) *log_ << line << std::endl;
}

std::string Pipeline::current_output_hash(const std::string& stage) const { return tree_hash(stage_dir(stage)); }

RunManifest Pipeline::require_upstream(const std::string& stage) const {
  const auto path = manifest_path(stage);
  if (!fs::exists(path)) {
    throw ArtifactError("missing " + stage + " artifact under " + stage_dir(stage).string() + "; run `pcda " +
                        command_for(stage) + "` first");
  }
  const auto m = manifest_from_json(nlohmann::json::parse(read_text(path)));
  if (current_output_hash(stage) != m.output_hash) {
    throw ArtifactError("stale artifact: " + stage_dir(stage).string() + " no longer matches the hash recorded by `pcda " +
                        command_for(stage) + "`; re-run that stage");
  }
  return m;
}

std::string Pipeline::section_text(const std::vector<std::string>& sections) const {
  const auto root = YAML::Load(to_yaml(config_));
  std::string out = "seed: " + std::to_string(config_.seed) + "\n";
  for (const auto& s : sections) {
    YAML::Node wrapper;
    wrapper[s] = root[s];
    out += YAML::Dump(wrapper) + "\n";
  }
  return out;
}

StageSummary Pipeline::run_stage(const std::string& stage, const std::vector<std::string>& upstream,
                                 const std::vector<std::string>& sections, const Body& body) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m;
  m.stage = stage;
  m.version = std::string(version_string());
  m.started_at = now_iso8601();
  for (const auto& u : upstream) m.inputs[u] = require_upstream(u).output_hash;
  m.config_snapshot = section_text(sections);
  std::string key_material = stage + "\n" + m.config_snapshot;
  for (const auto& [k, v] : m.inputs) key_material += k + "=" + v + "\n";
  m.stage_key = sha256_hex(key_material);

  StageSummary summary;
  summary.stage = stage;
  summary.output = stage_dir(stage);
  const auto out = stage_dir(stage);
  if (!force_ && fs::exists(manifest_path(stage))) {
    const auto old = manifest_from_json(nlohmann::json::parse(read_text(manifest_path(stage))));
    if (old.stage_key == m.stage_key && current_output_hash(stage) == old.output_hash) {
      summary.skipped = true;
      if (fs::exists(out / "summary.json")) {
        summary.details = nlohmann::ordered_json::parse(read_text(out / "summary.json"));
      }
      log("[" + stage + "] up to date, skipped");
      return summary;
    }
  }

  const bool external = stage == "data" && !config_.dataset.path.empty();
  if (!external) {
    // A directory left by a different configuration (or a forced re-run) is
    // cleared; one left by an interrupted run of this configuration is kept
    // so resumable stages can continue.
    const auto marker = out / kStageKeyFile;
    if (fs::exists(out) && (force_ || !fs::exists(marker) || read_text(marker) != m.stage_key)) fs::remove_all(out);
    fs::create_directories(out);
    write_text(marker, m.stage_key);
  }
  log("[" + stage + "] running");
  body(out, summary.details);
  if (!external) write_text(out / "summary.json", summary.details.dump(2) + "\n");

  m.output_hash = current_output_hash(stage);
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name != kStageKeyFile) m.outputs.push_back(name);
  }
  std::sort(m.outputs.begin(), m.outputs.end());
  m.finished_at = now_iso8601();
  fs::create_directories(manifest_path(stage).parent_path());
  write_text(manifest_path(stage), manifest_to_json(m).dump(2) + "\n");
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log("[" + stage + "] done in " + fmt(summary.seconds, 1) + " s");
  return summary;
}

datakit::DatasetManifest Pipeline::load_data() const { return datakit::load_dataset(data_dir()); }
datakit::AttributeOracle Pipeline::load_oracle() const { return datakit::load_oracle(stage_dir("oracle")); }
ganlite::GanModel Pipeline::load_gan() const { return ganlite::load_gan(stage_dir("gan")); }
projector::LatentStore Pipeline::load_latents() const { return projector::load_latent_store(stage_dir("latents")); }
aligner::AlignmentModel Pipeline::load_alignment() const { return aligner::load_alignment(stage_dir("align")); }

StageSummary Pipeline::make_data() {
  return run_stage("data", {}, {"dataset"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto m = config_.dataset.path.empty() ? datakit::generate_synth_dataset(config_.dataset.synth,
                                                                                stage_seed("data"), out)
                                                : datakit::load_dataset(out);
    d["name"] = m.name;
    d["resolution"] = m.resolution;
    d["synthetic"] = m.synthetic;
    d["train"] = m.pairs_in(datakit::Split::kTrain).size();
    d["val"] = m.pairs_in(datakit::Split::kVal).size();
    d["test"] = m.pairs_in(datakit::Split::kTest).size();
  });
}

StageSummary Pipeline::train_oracle() {
  return run_stage("oracle", {"data"}, {"oracle"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    if (!manifest.synthetic) throw ConfigError("the attribute oracle needs the synthetic dataset");
    datakit::OracleReport rep;
    auto oracle = datakit::train_attribute_oracle(manifest, config_.oracle, stage_seed("oracle"), &rep);
    datakit::save_oracle(oracle, out);
    Rng rng = make_rng(stage_seed("oracle"), "heldout_renders");
    const auto acc = datakit::evaluate_oracle(oracle, datakit::sample_specs(1000, manifest.resolution, rng),
                                              manifest.resolution);
    d["train_accuracy"] = rep.train_accuracy;
    d["heldout_accuracy"] = {{"all", acc.all}, {"shape", acc.shape}, {"color", acc.color}, {"size", acc.size},
                             {"bg", acc.bg}};
  });
}

StageSummary Pipeline::train_gan() {
  return run_stage("gan", {"data"}, {"gan"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    double last_r1 = 0.0;  // r1 is only computed every r1_interval steps
    ganlite::train_gan(manifest, config_.gan, stage_seed("gan"), out, [&](const ganlite::LossRecord& r) {
      if (r.step % config_.gan.r1_interval == 0) last_r1 = r.r1;
      if ((r.step + 1) % 100 == 0) {
        log("[gan] step " + std::to_string(r.step + 1) + "/" + std::to_string(config_.gan.steps) + " d " +
            fmt(r.d_loss) + " g " + fmt(r.g_loss) + " r1 " + fmt(last_r1));
      }
    });
    const auto history = ganlite::read_loss_history(out / "loss_history.csv");
    d["steps"] = history.size();
    if (!history.empty()) {
      d["final_d_loss"] = history.back().d_loss;
      d["final_g_loss"] = history.back().g_loss;
      const std::size_t tail = std::min<std::size_t>(100, history.size());
      double rl = 0.0, fl = 0.0;
      for (std::size_t i = history.size() - tail; i < history.size(); ++i) {
        rl += history[i].real_logit / static_cast<double>(tail);
        fl += history[i].fake_logit / static_cast<double>(tail);
      }
      d["real_logit_tail_mean"] = rl;
      d["fake_logit_tail_mean"] = fl;
    }
  });
}

StageSummary Pipeline::project() {
  const bool use_oracle = config_.projection.extractor == ExtractorKind::kOracleTrunk;
  std::vector<std::string> up = {"data", "gan"};
  if (use_oracle) up.push_back("oracle");
  return run_stage("latents", up, {"projection"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    auto gan = load_gan();
    std::unique_ptr<projector::PerceptualExtractor> extractor;
    if (use_oracle) {
      extractor = std::make_unique<projector::OracleTrunkExtractor>(load_oracle()->trunk);
    } else {
      extractor = std::make_unique<projector::RandomConvExtractor>(4, 32, derive_seed(stage_seed("latents"), "extractor"));
    }
    const auto stats = projector::estimate_w_stats(gan, config_.projection.w_stats_samples, stage_seed("latents"));
    const auto store = projector::project_dataset(gan, *extractor, manifest, stats, config_.projection.config,
                                                  stage_seed("latents"), out, [&](std::size_t done, std::size_t total) {
                                                    log("[latents] " + std::to_string(done) + "/" + std::to_string(total));
                                                  });
    std::vector<double> ratios;
    for (std::size_t i = 0; i < store.ids.size(); ++i) {
      ratios.push_back(store.initial_losses[i] > 0 ? store.final_losses[i] / store.initial_losses[i] : 0.0);
    }
    d["images"] = store.ids.size();
    d["median_final_over_initial"] = ratios.empty() ? 0.0 : median(ratios);
    d["sigma2_w"] = stats.sigma2_w;
  });
}

StageSummary Pipeline::train_align() {
  return run_stage("align", {"data", "latents"}, {"alignment"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    const auto store = load_latents();
    auto result = aligner::train_alignment(manifest, store, config_.alignment, stage_seed("align"));
    aligner::save_alignment(result.model, stage_seed("align"), out);
    aligner::write_align_history(result.history, out / "loss_history.csv");
    d["steps"] = result.history.size();
    d["train_loss"] = result.train_loss;
    d["baseline_loss"] = result.baseline_loss;
    d["loss_ratio"] = result.baseline_loss > 0 ? result.train_loss / result.baseline_loss : 0.0;
  });
}

StageSummary Pipeline::augment() {
  std::vector<std::string> up = {"data", "gan", "align"};
  const bool synthetic = load_data().synthetic;
  if (synthetic) up.push_back("oracle");
  return run_stage("augment", up, {"augmentation"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    auto gan = load_gan();
    auto alignment = load_alignment();
    const auto vocab = datakit::load_vocab(manifest.dir / manifest.vocab_path);
    const auto pos_vocab = datakit::load_pos_vocab(manifest.dir / manifest.pos_vocab_path);
    augmentor::AugmentContext ctx{&vocab, &pos_vocab, &alignment, &gan};
    const auto& rc = config_.augmentation.replacement;
    const auto seed = stage_seed("augment");

    if (synthetic) {
      // Semantic consistency on held-out captions, for r = 0 and the configured r.
      auto oracle = load_oracle();
      std::vector<augmentor::SourceRecord> held_out;
      for (const auto* p : manifest.pairs_in(datakit::Split::kTest)) {
        if (static_cast<int>(held_out.size()) >= config_.augmentation.semantic_samples) break;
        held_out.push_back({&manifest.caption(p->caption_id), p->pair_id});
      }
      auto score_json = [](const evalkit::SemanticScore& s) {
        nlohmann::ordered_json j;
        for (auto [name, a] : {std::pair{"shape", s.shape}, {"color", s.color}, {"size", s.size}, {"bg", s.bg}}) {
          j[name] = {{"accuracy", a.accuracy()}, {"coverage", a.coverage()}, {"scored", a.scored}};
        }
        return j;
      };
      augmentor::ReplacementConfig identity = rc;
      identity.r = 0.0;
      const auto s0 = evalkit::semantic_consistency_score(
          augmentor::augment_batch(held_out, identity, ctx, seed, 1.0), oracle);
      const auto sr = evalkit::semantic_consistency_score(augmentor::augment_batch(held_out, rc, ctx, seed, 1.0), oracle);
      d["semantic_r0"] = score_json(s0);
      d["semantic_r"] = score_json(sr);
    }
    if (config_.augmentation.offline) {
      std::vector<augmentor::SourceRecord> train;
      for (const auto* p : manifest.pairs_in(datakit::Split::kTrain)) {
        train.push_back({&manifest.caption(p->caption_id), p->pair_id});
      }
      const auto pairs = augmentor::augment_batch(train, rc, ctx, seed, config_.augmentation.scale);
      const auto dir = augmentor::write_augmented_pairs(pairs, seed, manifest.dir);
      d["offline_pairs"] = pairs.size();
      d["offline_dir"] = dir.string();
      write_text(out / "offline_location.txt", dir.string() + "\n");
    }
  });
}

std::vector<std::string> Pipeline::retrieval_upstream() const {
  if (config_.retrieval.mode == retriever::TrainMode::kBaseline) return {"data"};
  return {"data", "gan", "align"};
}

StageSummary Pipeline::train_retrieval() {
  return run_stage("retrieval", retrieval_upstream(), {"augmentation", "retrieval"},
                   [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    std::optional<ganlite::GanModel> gan;
    std::optional<aligner::AlignmentModel> alignment;
    datakit::Vocabulary vocab;
    datakit::PosVocabulary pos_vocab;
    augmentor::AugmentContext ctx;
    augmentor::AugmentContext* ctx_ptr = nullptr;
    if (config_.retrieval.mode != retriever::TrainMode::kBaseline) {
      gan = load_gan();
      alignment = load_alignment();
      vocab = datakit::load_vocab(manifest.dir / manifest.vocab_path);
      pos_vocab = datakit::load_pos_vocab(manifest.dir / manifest.pos_vocab_path);
      ctx = {&vocab, &pos_vocab, &*alignment, &*gan};
      ctx_ptr = &ctx;
    }
    auto result = retriever::train_retrieval(manifest, config_.retrieval, ctx_ptr, stage_seed("retrieval"),
                                             [&](const retriever::EpochRecord& r) {
                                               log("[retrieval] epoch " + std::to_string(r.epoch) + " " + r.phase +
                                                   " loss " + fmt(r.train_loss) + " val R@1 " + fmt(r.val_r1, 2));
                                             });
    retriever::save_encoders(result.best, stage_seed("retrieval"), out / "best");
    retriever::write_epochs_csv(result.history, out / "epochs.csv");
    write_text(out / "config.yaml", to_yaml(config_));
    d["best_epoch"] = result.best_epoch;
    d["best_val_r1"] = result.best_val_r1;
    d["mode"] = retriever::mode_name(config_.retrieval.mode);
  });
}

StageSummary Pipeline::evaluate() {
  return run_stage("eval", {"data", "retrieval"}, {"eval"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    auto enc = retriever::load_encoders(stage_dir("retrieval") / "best");
    auto protocol = config_.eval.protocol;
    const auto seed = config_.eval.seed.value_or(stage_seed("eval"));
    const auto report = evalkit::sampled_recall_protocol(enc, manifest, datakit::Split::kTest, protocol, seed);
    evalkit::write_report(report, out);
    d["i2t_r1"] = report.i2t.r1;
    d["t2i_r1"] = report.t2i.r1;
    d["n"] = report.n;
    d["repeats"] = report.repeats;
  });
}

StageSummary Pipeline::report() {
  return run_stage("report", {"data", "gan", "align", "eval"}, {"eval"}, [&](const fs::path& out, nlohmann::ordered_json& d) {
    const auto manifest = load_data();
    auto gan = load_gan();
    auto alignment = load_alignment();
    const auto vocab = datakit::load_vocab(manifest.dir / manifest.vocab_path);
    const auto pos_vocab = datakit::load_pos_vocab(manifest.dir / manifest.pos_vocab_path);
    augmentor::AugmentContext ctx{&vocab, &pos_vocab, &alignment, &gan};

    std::vector<std::vector<Image>> rows;
    std::vector<std::vector<std::string>> captions;
    const auto test = manifest.pairs_in(datakit::Split::kTest);
    for (int i = 0; i < config_.eval.montage_examples && i < static_cast<int>(test.size()); ++i) {
      const auto* p = test[static_cast<std::size_t>(i)];
      const auto& c = manifest.caption(p->caption_id);
      std::vector<Image> row = {manifest.load_image(p->image_id)};
      std::vector<std::string> caps;
      std::string joined;
      for (const auto& t : c.tokens) joined += (joined.empty() ? "" : " ") + t;
      caps.push_back(joined);
      for (double r : config_.eval.montage_rates) {
        auto rc = config_.augmentation.replacement;
        rc.r = r;
        const auto pair = augmentor::generate_augmented_pair(c, p->pair_id, rc, ctx, stage_seed("report"));
        row.push_back(Image::from_tensor(pair.image_prime));
        std::string s = "r=" + fmt(r, 1) + ":";
        for (const auto& t : pair.tokens_prime) s += " " + t;
        caps.push_back(s);
      }
      rows.push_back(std::move(row));
      captions.push_back(std::move(caps));
    }
    evalkit::write_montage(rows, captions, out / "montage.png");

    std::ostringstream md;
    md << "# Run summary\n\n";
    for (const auto* stage : {"data", "oracle", "gan", "latents", "align", "augment", "retrieval", "eval"}) {
      const auto path = stage_dir(stage) / "summary.json";
      if (!fs::exists(path)) continue;
      md << "## " << stage << "\n\n```json\n" << nlohmann::ordered_json::parse(read_text(path)).dump(2) << "\n```\n\n";
    }
    write_text(out / "summary.md", md.str());
    d["montage_rows"] = rows.size();
    d["montage_cols"] = rows.empty() ? 0 : rows.front().size();
  });
}

std::vector<StageSummary> Pipeline::run_all() {
  std::vector<StageSummary> out;
  out.push_back(make_data());
  if (load_data().synthetic || config_.projection.extractor == ExtractorKind::kOracleTrunk) out.push_back(train_oracle());
  out.push_back(train_gan());
  out.push_back(project());
  out.push_back(train_align());
  out.push_back(augment());
  out.push_back(train_retrieval());
  out.push_back(evaluate());
  out.push_back(report());
  return out;
}

AblationTable Pipeline::ablate(AblationGrid grid) { return ablate(grid, ablation_arms(grid, config_)); }

AblationTable Pipeline::ablate(AblationGrid grid, const std::vector<AblationArm>& arms) {
  AblationTable table;
  table.grid = grid;
  const bool needs_aug = std::any_of(arms.begin(), arms.end(),
                                     [](const AblationArm& a) { return a.mode != retriever::TrainMode::kBaseline; });
  std::map<std::string, std::string> inputs;
  inputs["data"] = require_upstream("data").output_hash;
  if (needs_aug) {
    inputs["gan"] = require_upstream("gan").output_hash;
    inputs["align"] = require_upstream("align").output_hash;
  }
  const auto manifest = load_data();
  std::optional<ganlite::GanModel> gan;
  std::optional<aligner::AlignmentModel> alignment;
  datakit::Vocabulary vocab;
  datakit::PosVocabulary pos_vocab;
  augmentor::AugmentContext ctx;
  if (needs_aug) {
    gan = load_gan();
    alignment = load_alignment();
    vocab = datakit::load_vocab(manifest.dir / manifest.vocab_path);
    pos_vocab = datakit::load_pos_vocab(manifest.dir / manifest.pos_vocab_path);
    ctx = {&vocab, &pos_vocab, &*alignment, &*gan};
  }
  const auto eval_seed = config_.eval.seed.value_or(stage_seed("eval"));
  const auto grid_dir = root_ / "ablation" / std::string(ablation_grid_name(grid));

  for (const auto& arm : arms) {
    AblationRow row;
    row.arm = arm;
    auto rc = config_.retrieval;
    rc.mode = arm.mode;
    rc.replacement = arm.replacement;
    rc.aug_scale = arm.scale;
    for (auto s : config_.ablation.seeds) {
      const auto dir = grid_dir / slug(arm.label) / ("seed" + std::to_string(s));
      std::string key_material = section_text({"retrieval", "eval"}) + std::string(retriever::mode_name(arm.mode)) +
                                 fmt(arm.replacement.r, 6) + std::string(augmentor::strategy_name(arm.replacement.strategy)) +
                                 fmt(arm.scale, 6) + (arm.replacement.exclude_original ? "x" : "-") + std::to_string(s);
      if (arm.replacement.tag_filter) {
        for (const auto& t : *arm.replacement.tag_filter) key_material += "|" + t;
      }
      for (const auto& [k, v] : inputs) key_material += k + "=" + v;
      const auto key = sha256_hex(key_material);
      if (force_ || !fs::exists(dir / "metrics.json") || !fs::exists(dir / kStageKeyFile) ||
          read_text(dir / kStageKeyFile) != key) {
        log("[ablate] " + arm.label + " seed " + std::to_string(s));
        fs::remove_all(dir);
        fs::create_directories(dir);
        const auto seed = derive_seed(config_.seed, "ablation/seed/" + std::to_string(s));
        auto result = retriever::train_retrieval(manifest, rc, needs_aug && arm.mode != retriever::TrainMode::kBaseline
                                                                   ? &ctx
                                                                   : nullptr,
                                                 seed);
        retriever::save_encoders(result.best, seed, dir / "best");
        retriever::write_epochs_csv(result.history, dir / "epochs.csv");
        const auto report =
            evalkit::sampled_recall_protocol(result.best, manifest, datakit::Split::kTest, config_.eval.protocol, eval_seed);
        evalkit::write_report(report, dir);
        write_text(dir / kStageKeyFile, key);
      }
      const auto j = nlohmann::json::parse(read_text(dir / "metrics.json"));
      row.seed_r1.push_back(get_metric(j, "i2t", "r1"));
      row.seed_r5.push_back(get_metric(j, "i2t", "r5"));
      row.seed_r10.push_back(get_metric(j, "i2t", "r10"));
    }
    row.r1 = median(row.seed_r1);
    row.r5 = median(row.seed_r5);
    row.r10 = median(row.seed_r10);
    table.rows.push_back(std::move(row));
  }
  fs::create_directories(grid_dir);
  write_text(root_ / "ablation" / (std::string(ablation_grid_name(grid)) + ".csv"), ablation_csv(table));
  write_text(root_ / "ablation" / (std::string(ablation_grid_name(grid)) + ".md"), ablation_markdown(table));
  return table;
}

}  // namespace pcda
