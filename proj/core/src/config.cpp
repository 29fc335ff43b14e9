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

#include "pcda/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>

#include <yaml-cpp/yaml.h>

#include "pcda/error.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda {
namespace {

// Reads keys from one mapping and remembers which ones were consumed, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(label() + " must be a mapping");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    if (v.IsNull()) {
      out.reset();
      return;
    }
    T tmp{};
    get(key, tmp);
    out = tmp;
  }

  Section child(const std::string& key) {
    used_.insert(key);
    YAML::Node v;
    if (node_ && node_.IsMap()) v = node_[key];
    return Section(v, qualified(key));
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

std::string noise_scale_name(projector::NoiseScale s) {
  return s == projector::NoiseScale::kVariance ? "variance" : "stddev";
}

projector::NoiseScale noise_scale_from(const std::string& s) {
  if (s == "variance") return projector::NoiseScale::kVariance;
  if (s == "stddev") return projector::NoiseScale::kStddev;
  throw ConfigError("projection.noise_scale must be variance or stddev, got '" + s + "'");
}

std::string extractor_name(ExtractorKind k) { return k == ExtractorKind::kOracleTrunk ? "oracle_trunk" : "random_conv"; }

ExtractorKind extractor_from(const std::string& s) {
  if (s == "oracle_trunk") return ExtractorKind::kOracleTrunk;
  if (s == "random_conv") return ExtractorKind::kRandomConv;
  throw ConfigError("projection.extractor must be oracle_trunk or random_conv, got '" + s + "'");
}

std::string split_mode_name(datakit::SplitMode m) { return m == datakit::SplitMode::kInstance ? "instance" : "class"; }

datakit::SplitMode split_mode_from(const std::string& s) {
  if (s == "instance") return datakit::SplitMode::kInstance;
  if (s == "class") return datakit::SplitMode::kClass;
  throw ConfigError("dataset.split_mode must be instance or class, got '" + s + "'");
}

std::string level_name(retriever::Level l) { return l == retriever::Level::kInstance ? "instance" : "class"; }

retriever::Level level_from(const std::string& s, const std::string& key) {
  if (s == "instance") return retriever::Level::kInstance;
  if (s == "class") return retriever::Level::kClass;
  throw ConfigError(key + " must be instance or class, got '" + s + "'");
}

// Shortest decimal that reads back as the same double.
std::string shortest(double v) {
  char buf[64];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof(buf), "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

void PipelineConfig::validate() const {
  require(schema_version == kConfigSchemaVersion,
          "schema_version " + std::to_string(schema_version) + " is not supported (expected " +
              std::to_string(kConfigSchemaVersion) + ")");
  const auto& s = dataset.synth;
  require(s.resolution >= 8 && (s.resolution & (s.resolution - 1)) == 0, "dataset.resolution must be a power of two >= 8");
  require(s.train > 0 && s.val > 0 && s.test > 0, "dataset split counts must be positive");
  require(s.captions_per_image >= 1, "dataset.captions_per_image must be >= 1");
  require(oracle.epochs >= 1 && oracle.batch_size >= 1 && oracle.lr > 0 && oracle.extra_renders >= 0,
          "oracle section out of range");
  require(gan.d_z >= 1 && gan.d_w >= 1 && gan.mapping_layers >= 0, "gan dimensions out of range");
  require(gan.max_channels >= 1 && gan.min_channels >= 1 && gan.batch_size >= 1 && gan.lr > 0,
          "gan section out of range");
  require(gan.steps >= 0 && gan.checkpoint_every >= 1 && gan.r1_interval >= 1 && gan.r1_gamma >= 0 &&
              gan.ema_kimg >= 0,
          "gan schedule out of range");
  const auto& p = projection.config;
  require(p.steps >= 0 && p.lr > 0 && p.noise_coeff >= 0 && p.batch_size >= 1, "projection section out of range");
  require(p.noise_ramp > 0 && p.noise_ramp <= 1 && p.lr_rampdown >= 0 && p.lr_rampdown <= 1 && p.lr_rampup >= 0 &&
              p.lr_rampup <= 1,
          "projection ramps must lie in [0, 1]");
  require(projection.w_stats_samples >= 2, "projection.w_stats_samples must be >= 2");
  require(alignment.d_w == gan.d_w, "alignment output size must equal gan.d_w");
  require(alignment.epochs >= 0 && alignment.batch_size >= 1 && alignment.lr >= 0, "alignment section out of range");
  augmentation.replacement.validate();
  require(augmentation.scale >= 0, "augmentation.scale must be >= 0");
  require(augmentation.semantic_samples >= 1, "augmentation.semantic_samples must be >= 1");
  auto r = retrieval;
  r.replacement = augmentation.replacement;
  r.aug_scale = augmentation.scale;
  r.validate(r.mode != retriever::TrainMode::kBaseline);
  require(eval.protocol.n >= 1 && eval.protocol.repeats >= 1, "eval.n and eval.repeats must be >= 1");
  require(eval.montage_examples >= 1, "eval.montage_examples must be >= 1");
  for (double r : eval.montage_rates) require(r >= 0 && r <= 1, "eval.montage_rates must lie in [0, 1]");
  for (double r : ablation.r_grid) require(r >= 0 && r <= 1, "ablation.r_grid must lie in [0, 1]");
  require(!ablation.seeds.empty(), "ablation.seeds must not be empty");
}

PipelineConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  PipelineConfig c;
  Section top(root, "");
  top.get("schema_version", c.schema_version);
  top.get("seed", c.seed);
  top.get("artifact_root", c.artifact_root);

  {
    auto d = top.child("dataset");
    auto& s = c.dataset.synth;
    std::string mode = split_mode_name(s.split_mode);
    d.get("path", c.dataset.path);
    d.get("name", s.name);
    d.get("resolution", s.resolution);
    d.get("train", s.train);
    d.get("val", s.val);
    d.get("test", s.test);
    d.get("captions_per_image", s.captions_per_image);
    d.get("split_mode", mode);
    d.get("held_out_classes", s.held_out_classes);
    s.split_mode = split_mode_from(mode);
    d.finish();
  }
  {
    auto o = top.child("oracle");
    o.get("epochs", c.oracle.epochs);
    o.get("batch_size", c.oracle.batch_size);
    o.get("lr", c.oracle.lr);
    o.get("extra_renders", c.oracle.extra_renders);
    o.finish();
  }
  {
    auto g = top.child("gan");
    g.get("d_z", c.gan.d_z);
    g.get("d_w", c.gan.d_w);
    g.get("mapping_layers", c.gan.mapping_layers);
    g.get("max_channels", c.gan.max_channels);
    g.get("min_channels", c.gan.min_channels);
    g.get("batch_size", c.gan.batch_size);
    g.get("lr", c.gan.lr);
    g.get("mapping_lr_mult", c.gan.mapping_lr_mult);
    g.get("r1_gamma", c.gan.r1_gamma);
    g.get("r1_interval", c.gan.r1_interval);
    g.get("ema_kimg", c.gan.ema_kimg);
    g.get("steps", c.gan.steps);
    g.get("checkpoint_every", c.gan.checkpoint_every);
    g.finish();
  }
  {
    auto p = top.child("projection");
    auto& pc = c.projection.config;
    std::string scale = noise_scale_name(pc.noise_scale), extractor = extractor_name(c.projection.extractor);
    p.get("steps", pc.steps);
    p.get("lr", pc.lr);
    p.get("noise_coeff", pc.noise_coeff);
    p.get("noise_ramp", pc.noise_ramp);
    p.get("lr_rampdown", pc.lr_rampdown);
    p.get("lr_rampup", pc.lr_rampup);
    p.get("noise_scale", scale);
    p.get("batch_size", pc.batch_size);
    p.get("extractor", extractor);
    p.get("w_stats_samples", c.projection.w_stats_samples);
    pc.noise_scale = noise_scale_from(scale);
    c.projection.extractor = extractor_from(extractor);
    p.finish();
  }
  {
    auto a = top.child("alignment");
    a.get("embed_dim", c.alignment.embed_dim);
    a.get("hidden", c.alignment.hidden);
    a.get("lr", c.alignment.lr);
    a.get("epochs", c.alignment.epochs);
    a.get("batch_size", c.alignment.batch_size);
    a.finish();
  }
  {
    auto a = top.child("augmentation");
    auto& rc = c.augmentation.replacement;
    std::string strategy(augmentor::strategy_name(rc.strategy));
    std::optional<std::vector<std::string>> filter;
    a.get("r", rc.r);
    a.get("strategy", strategy);
    a.get("exclude_original", rc.exclude_original);
    a.get_optional("tag_filter", filter);
    a.get("scale", c.augmentation.scale);
    a.get("offline", c.augmentation.offline);
    a.get("semantic_samples", c.augmentation.semantic_samples);
    rc.strategy = augmentor::strategy_from_name(strategy);
    if (filter) rc.tag_filter = std::set<std::string>(filter->begin(), filter->end());
    a.finish();
  }
  {
    auto r = top.child("retrieval");
    auto& rc = c.retrieval;
    std::string mode(retriever::mode_name(rc.mode)), level = level_name(rc.level);
    r.get("mode", mode);
    r.get("level", level);
    r.get("margin", rc.margin);
    r.get("lr", rc.lr);
    r.get("lr_decay_epoch", rc.lr_decay_epoch);
    r.get("lr_decay", rc.lr_decay);
    r.get("epochs", rc.epochs);
    r.get("pretrain_epochs", rc.pretrain_epochs);
    r.get("batch_size", rc.batch_size);
    r.get("embed_dim", rc.encoder.embed_dim);
    r.get("word_dim", rc.encoder.word_dim);
    r.get("hidden", rc.encoder.hidden);
    r.get("channels", rc.encoder.channels);
    rc.mode = retriever::mode_from_name(mode);
    rc.level = level_from(level, r.qualified("level"));
    r.finish();
  }
  {
    auto e = top.child("eval");
    std::string level = level_name(c.eval.protocol.level);
    e.get("n", c.eval.protocol.n);
    e.get("repeats", c.eval.protocol.repeats);
    e.get("level", level);
    e.get_optional("seed", c.eval.seed);
    e.get("montage_rates", c.eval.montage_rates);
    e.get("montage_examples", c.eval.montage_examples);
    c.eval.protocol.level = level_from(level, e.qualified("level"));
    e.finish();
  }
  {
    auto a = top.child("ablation");
    a.get("r_grid", c.ablation.r_grid);
    a.get("seeds", c.ablation.seeds);
    a.finish();
  }
  top.finish();

  c.gan.resolution = c.dataset.synth.resolution;
  c.alignment.d_w = c.gan.d_w;
  c.retrieval.replacement = c.augmentation.replacement;
  c.retrieval.aug_scale = c.augmentation.scale;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(read_text(path));
}

std::string to_yaml(const PipelineConfig& c) {
  YAML::Emitter out;
  auto num = [&](const char* key, double v) { out << YAML::Key << key << YAML::Value << shortest(v); };
  auto intv = [&](const char* key, long long v) { out << YAML::Key << key << YAML::Value << v; };
  auto str = [&](const char* key, const std::string& v) {
    out << YAML::Key << key << YAML::Value << YAML::DoubleQuoted << v;
  };
  auto flag = [&](const char* key, bool v) { out << YAML::Key << key << YAML::Value << YAML::TrueFalseBool << v; };

  out << YAML::BeginMap;
  intv("schema_version", c.schema_version);
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  str("artifact_root", c.artifact_root);

  const auto& s = c.dataset.synth;
  out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  str("path", c.dataset.path);
  str("name", s.name);
  intv("resolution", s.resolution);
  intv("train", s.train);
  intv("val", s.val);
  intv("test", s.test);
  intv("captions_per_image", s.captions_per_image);
  str("split_mode", split_mode_name(s.split_mode));
  intv("held_out_classes", s.held_out_classes);
  out << YAML::EndMap;

  out << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  intv("epochs", c.oracle.epochs);
  intv("batch_size", c.oracle.batch_size);
  num("lr", c.oracle.lr);
  intv("extra_renders", c.oracle.extra_renders);
  out << YAML::EndMap;

  out << YAML::Key << "gan" << YAML::Value << YAML::BeginMap;
  intv("d_z", c.gan.d_z);
  intv("d_w", c.gan.d_w);
  intv("mapping_layers", c.gan.mapping_layers);
  intv("max_channels", c.gan.max_channels);
  intv("min_channels", c.gan.min_channels);
  intv("batch_size", c.gan.batch_size);
  num("lr", c.gan.lr);
  num("mapping_lr_mult", c.gan.mapping_lr_mult);
  num("r1_gamma", c.gan.r1_gamma);
  intv("r1_interval", c.gan.r1_interval);
  num("ema_kimg", c.gan.ema_kimg);
  intv("steps", c.gan.steps);
  intv("checkpoint_every", c.gan.checkpoint_every);
  out << YAML::EndMap;

  const auto& p = c.projection.config;
  out << YAML::Key << "projection" << YAML::Value << YAML::BeginMap;
  intv("steps", p.steps);
  num("lr", p.lr);
  num("noise_coeff", p.noise_coeff);
  num("noise_ramp", p.noise_ramp);
  num("lr_rampdown", p.lr_rampdown);
  num("lr_rampup", p.lr_rampup);
  str("noise_scale", noise_scale_name(p.noise_scale));
  intv("batch_size", p.batch_size);
  str("extractor", extractor_name(c.projection.extractor));
  intv("w_stats_samples", c.projection.w_stats_samples);
  out << YAML::EndMap;

  out << YAML::Key << "alignment" << YAML::Value << YAML::BeginMap;
  intv("embed_dim", c.alignment.embed_dim);
  intv("hidden", c.alignment.hidden);
  num("lr", c.alignment.lr);
  intv("epochs", c.alignment.epochs);
  intv("batch_size", c.alignment.batch_size);
  out << YAML::EndMap;

  const auto& rc = c.augmentation.replacement;
  out << YAML::Key << "augmentation" << YAML::Value << YAML::BeginMap;
  num("r", rc.r);
  str("strategy", std::string(augmentor::strategy_name(rc.strategy)));
  flag("exclude_original", rc.exclude_original);
  out << YAML::Key << "tag_filter" << YAML::Value;
  if (rc.tag_filter) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& t : *rc.tag_filter) out << YAML::DoubleQuoted << t;
    out << YAML::EndSeq;
  } else {
    out << YAML::Null;
  }
  num("scale", c.augmentation.scale);
  flag("offline", c.augmentation.offline);
  intv("semantic_samples", c.augmentation.semantic_samples);
  out << YAML::EndMap;

  const auto& r = c.retrieval;
  out << YAML::Key << "retrieval" << YAML::Value << YAML::BeginMap;
  str("mode", std::string(retriever::mode_name(r.mode)));
  str("level", level_name(r.level));
  num("margin", r.margin);
  num("lr", r.lr);
  intv("lr_decay_epoch", r.lr_decay_epoch);
  num("lr_decay", r.lr_decay);
  intv("epochs", r.epochs);
  intv("pretrain_epochs", r.pretrain_epochs);
  intv("batch_size", r.batch_size);
  intv("embed_dim", r.encoder.embed_dim);
  intv("word_dim", r.encoder.word_dim);
  intv("hidden", r.encoder.hidden);
  intv("channels", r.encoder.channels);
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  intv("n", c.eval.protocol.n);
  intv("repeats", c.eval.protocol.repeats);
  str("level", level_name(c.eval.protocol.level));
  out << YAML::Key << "seed" << YAML::Value;
  if (c.eval.seed) {
    out << *c.eval.seed;
  } else {
    out << YAML::Null;
  }
  out << YAML::Key << "montage_rates" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : c.eval.montage_rates) out << shortest(v);
  out << YAML::EndSeq;
  intv("montage_examples", c.eval.montage_examples);
  out << YAML::EndMap;

  out << YAML::Key << "ablation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "r_grid" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : c.ablation.r_grid) out << shortest(v);
  out << YAML::EndSeq;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto v : c.ablation.seeds) out << v;
  out << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

namespace {

// Desk-scale CPU settings at 32x32 shared by the acceptance and paper presets.
PipelineConfig desk_base() {
  PipelineConfig c;
  c.dataset.synth.resolution = 32;
  c.dataset.synth.train = 600;
  c.dataset.synth.val = 100;
  c.dataset.synth.test = 200;
  c.gan.resolution = 32;
  c.gan.max_channels = 64;
  c.gan.min_channels = 32;
  c.gan.steps = 5000;
  c.gan.checkpoint_every = 500;
  c.projection.config.steps = 1000;
  c.projection.w_stats_samples = 10000;
  c.alignment.epochs = 100;
  c.retrieval.lr = 1e-3;
  c.retrieval.epochs = 20;
  c.retrieval.lr_decay_epoch = 15;
  c.retrieval.pretrain_epochs = 5;
  c.eval.protocol.n = 1000;
  c.eval.protocol.repeats = 10;
  return c;
}

void set_replacement(PipelineConfig& c, double r, augmentor::Strategy s) {
  c.augmentation.replacement.r = r;
  c.augmentation.replacement.strategy = s;
  c.retrieval.replacement = c.augmentation.replacement;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"quickstart", "acceptance", "paper-table1", "paper-table2", "paper-table3"};
}

PipelineConfig preset(const std::string& name) {
  PipelineConfig c;
  if (name == "quickstart") {
    c.dataset.synth.resolution = 32;
    c.dataset.synth.train = 96;
    c.dataset.synth.val = 32;
    c.dataset.synth.test = 64;
    c.oracle.epochs = 3;
    c.oracle.extra_renders = 256;
    c.gan.resolution = 32;
    c.gan.d_z = c.gan.d_w = 32;
    c.gan.mapping_layers = 2;
    c.gan.max_channels = 32;
    c.gan.min_channels = 16;
    c.gan.batch_size = 8;
    c.gan.steps = 40;
    c.gan.checkpoint_every = 20;
    c.projection.config.steps = 20;
    c.projection.w_stats_samples = 1000;
    c.alignment.d_w = 32;
    c.alignment.embed_dim = 16;
    c.alignment.hidden = 32;
    c.alignment.epochs = 5;
    c.retrieval.mode = retriever::TrainMode::kJoint;
    c.retrieval.encoder = {32, 16, 32, 8};
    c.retrieval.epochs = 2;
    c.retrieval.lr = 1e-3;
    c.augmentation.semantic_samples = 32;
    c.eval.protocol.n = 64;
    c.eval.protocol.repeats = 3;
    c.eval.montage_examples = 2;
    c.ablation.r_grid = {0.0, 0.7};
    set_replacement(c, 0.7, augmentor::Strategy::kRandom);
  } else if (name == "acceptance") {
    c = desk_base();
    c.retrieval.mode = retriever::TrainMode::kJoint;
    c.ablation.r_grid = {0.0, 0.7, 1.0};
    c.ablation.seeds = {1, 2, 3};
    set_replacement(c, 0.7, augmentor::Strategy::kRandom);
  } else if (name == "paper-table1") {
    c = desk_base();
    c.retrieval.mode = retriever::TrainMode::kJoint;
    c.ablation.seeds = {1, 2, 3};
    set_replacement(c, 0.7, augmentor::Strategy::kRandom);
  } else if (name == "paper-table2") {
    c = desk_base();
    c.retrieval.mode = retriever::TrainMode::kJoint;
    c.ablation.seeds = {1, 2, 3};
    set_replacement(c, 0.7, augmentor::Strategy::kPos);
  } else if (name == "paper-table3") {
    c = desk_base();
    c.retrieval.mode = retriever::TrainMode::kPretrainFinetune;
    c.ablation.seeds = {1, 2, 3};
    set_replacement(c, 0.7, augmentor::Strategy::kRandom);
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + names + ")");
  }
  c.gan.resolution = c.dataset.synth.resolution;
  c.alignment.d_w = c.gan.d_w;
  c.retrieval.aug_scale = c.augmentation.scale;
  c.validate();
  return c;
}

}  // namespace pcda
