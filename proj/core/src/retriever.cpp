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

#include "pcda/retriever.hpp"

#include <cstdio>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/metrics.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::retriever {
namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv(int in, int out, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::LeakyReLU lrelu() { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); }

std::vector<std::int64_t> token_ids(const datakit::Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto i = vocab.find(t);
    ids.push_back(i ? static_cast<std::int64_t>(*i) + 1 : 0);
  }
  return ids;
}

torch::Tensor labels(const std::vector<std::int64_t>& v) { return torch::tensor(v, torch::kInt64); }

}  // namespace

ImageEncoderImpl::ImageEncoderImpl(const EncoderConfig& c) {
  const int ch = c.channels;
  trunk = register_module("trunk", torch::nn::Sequential(conv(3, ch, 1), lrelu(), conv(ch, 2 * ch, 2), lrelu(),
                                                         conv(2 * ch, 4 * ch, 2), lrelu(), conv(4 * ch, 4 * ch, 2),
                                                         lrelu()));
  proj = register_module("proj", torch::nn::Linear(8 * ch, c.embed_dim));
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor& x) {
  auto h = trunk->forward(x - 0.5);
  h = torch::cat({h.mean({2, 3}), h.amax({2, 3})}, 1);
  return F::normalize(proj(h), F::NormalizeFuncOptions().dim(1));
}

TextEncoderImpl::TextEncoderImpl(std::int64_t vocab_size, const EncoderConfig& c) {
  embedding = register_module("embedding", torch::nn::Embedding(vocab_size + 1, c.word_dim));
  lstm = register_module(
      "lstm", torch::nn::LSTM(torch::nn::LSTMOptions(c.word_dim, c.hidden).batch_first(true).bidirectional(true)));
  proj = register_module("proj", torch::nn::Linear(2 * c.hidden, c.embed_dim));
}

torch::Tensor TextEncoderImpl::forward(const std::vector<std::vector<std::int64_t>>& batch) {
  std::size_t max_len = 0;
  for (const auto& b : batch) {
    if (b.empty()) throw InvalidInput("text encoder: empty caption");
    max_len = std::max(max_len, b.size());
  }
  auto ids = torch::zeros({static_cast<std::int64_t>(batch.size()), static_cast<std::int64_t>(max_len)}, torch::kInt64);
  auto acc = ids.accessor<std::int64_t, 2>();
  std::vector<std::int64_t> lengths;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch[i].size(); ++j) acc[i][j] = batch[i][j];
    lengths.push_back(static_cast<std::int64_t>(batch[i].size()));
  }
  auto packed = torch::nn::utils::rnn::pack_padded_sequence(embedding(ids), torch::tensor(lengths), true, false);
  auto h_n = std::get<0>(std::get<1>(lstm->forward_with_packed_input(packed)));
  return F::normalize(proj(torch::cat({h_n[0], h_n[1]}, 1)), F::NormalizeFuncOptions().dim(1));
}

std::vector<torch::Tensor> RetrievalEncoders::parameters() const {
  auto p = image->parameters();
  for (auto& t : text->parameters()) p.push_back(t);
  return p;
}

void RetrievalEncoders::train(bool on) {
  image->train(on);
  text->train(on);
}

RetrievalEncoders make_encoders(const datakit::Vocabulary& vocab, int resolution, const EncoderConfig& config,
                                std::uint64_t seed) {
  torch::manual_seed(derive_seed(seed, "retrieval/init"));
  RetrievalEncoders e;
  e.image = ImageEncoder(config);
  e.text = TextEncoder(static_cast<std::int64_t>(vocab.size()), config);
  e.vocab = vocab;
  e.config = config;
  e.resolution = resolution;
  return e;
}

torch::Tensor embed_images(RetrievalEncoders& enc, const torch::Tensor& pixels) {
  if (pixels.dim() != 4 || pixels.size(0) == 0) throw InvalidInput("embed_images: expected a non-empty [N, 3, H, W] batch");
  if (torch::GradMode::is_enabled()) return enc.image->forward(pixels.to(torch::kFloat32));
  std::vector<torch::Tensor> out;
  for (std::int64_t s = 0; s < pixels.size(0); s += 256) {
    out.push_back(enc.image->forward(pixels.slice(0, s, std::min(pixels.size(0), s + 256)).to(torch::kFloat32)));
  }
  return torch::cat(out, 0);
}

torch::Tensor embed_texts(RetrievalEncoders& enc, const std::vector<std::vector<std::string>>& captions) {
  if (captions.empty()) throw InvalidInput("embed_texts: empty batch");
  std::vector<std::vector<std::int64_t>> ids;
  ids.reserve(captions.size());
  for (const auto& c : captions) ids.push_back(token_ids(enc.vocab, c));
  return enc.text->forward(ids);
}

torch::Tensor pairwise_distances(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1)) {
    throw InvalidInput("pairwise_distances: embedding dimensions differ");
  }
  auto d2 = (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(-1);
  auto positive = d2 > 0;
  return torch::where(positive, torch::sqrt(torch::where(positive, d2, torch::ones_like(d2))),
                      torch::zeros_like(d2));
}

torch::Tensor batch_hard_triplet_loss(const EmbeddingBatch& batch, const TripletConfig& config) {
  if (!(config.margin > 0.0)) throw InvalidInput("triplet margin must be positive");
  const auto ni = static_cast<std::int64_t>(batch.img_pair.size());
  const auto nt = static_cast<std::int64_t>(batch.txt_pair.size());
  if ((ni > 0 && batch.f_img.size(0) != ni) || (nt > 0 && batch.f_txt.size(0) != nt)) {
    throw InvalidInput("embedding batch: label and row counts differ");
  }
  const bool by_class = config.level == Level::kClass;
  std::vector<torch::Tensor> rows;
  if (ni > 0) rows.push_back(batch.f_img);
  if (nt > 0) rows.push_back(batch.f_txt);
  if (rows.empty()) throw InvalidInput("embedding batch is empty");
  auto x = torch::cat(rows, 0);
  std::vector<std::int64_t> lab(by_class ? batch.img_class : batch.img_pair);
  const auto& tl = by_class ? batch.txt_class : batch.txt_pair;
  lab.insert(lab.end(), tl.begin(), tl.end());
  if (static_cast<std::int64_t>(lab.size()) != ni + nt) throw InvalidInput("embedding batch: missing class labels");
  auto l = labels(lab);
  auto mod = torch::cat({torch::zeros({ni}, torch::kInt64), torch::ones({nt}, torch::kInt64)});

  auto d = pairwise_distances(x, x);
  auto same = l.unsqueeze(1) == l.unsqueeze(0);
  auto pos = same & (mod.unsqueeze(1) != mod.unsqueeze(0));
  auto neg = same.logical_not();
  auto has_pos = pos.any(1), has_neg = neg.any(1);
  if (!config.skip_unpaired && !has_pos.all().item<bool>()) {
    throw InvalidInput("triplet batch has an anchor without an opposite-modality positive");
  }
  auto valid = has_pos & has_neg;
  if (!valid.any().item<bool>()) throw InvalidInput("triplet batch has no anchor with both a positive and a negative");
  const double inf = std::numeric_limits<double>::infinity();
  auto hp = torch::where(pos, d, torch::full_like(d, -inf)).amax(1);
  auto hn = torch::where(neg, d, torch::full_like(d, inf)).amin(1);
  auto per_anchor = torch::relu(hp.index({valid}) - hn.index({valid}) + config.margin);
  return per_anchor.mean();
}

std::string_view mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kJoint: return "joint";
    case TrainMode::kPretrainFinetune: return "pretrain_finetune";
    case TrainMode::kNoisePair: return "noise_pair";
    case TrainMode::kTextOnly: return "text_only";
    case TrainMode::kUnpaired: return "unpaired";
    case TrainMode::kBaseline: return "baseline";
  }
  return "baseline";
}

TrainMode mode_from_name(std::string_view name) {
  for (auto m : {TrainMode::kJoint, TrainMode::kPretrainFinetune, TrainMode::kNoisePair, TrainMode::kTextOnly,
                 TrainMode::kUnpaired, TrainMode::kBaseline}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown retrieval mode '" + std::string(name) + "'");
}

void RetrievalConfig::validate(bool have_augmentation) const {
  replacement.validate();
  if (mode == TrainMode::kBaseline && replacement.r > 0.0) {
    throw ConfigError("baseline mode trains on real data only; replacement rate must be 0");
  }
  if (mode != TrainMode::kBaseline && !have_augmentation) {
    throw ConfigError(std::string(mode_name(mode)) + " mode needs the aligner and generator checkpoints");
  }
  if (aug_scale < 0.0) throw ConfigError("augmentation scale must be >= 0");
  if (epochs < 0 || pretrain_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (batch_size < 2) throw ConfigError("retrieval batch size must be >= 2");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
}

namespace {

struct SplitData {
  torch::Tensor pixels;
  std::vector<std::vector<std::string>> captions;
  std::vector<int> classes;
};

SplitData load_split(const datakit::DatasetManifest& manifest, datakit::Split split) {
  const auto pairs = manifest.pairs_in(split);
  if (pairs.empty()) throw InvalidInput("split " + std::string(datakit::split_name(split)) + " is empty");
  SplitData d;
  std::vector<Image> images;
  for (const auto* p : pairs) {
    images.push_back(manifest.load_image(p->image_id));
    d.captions.push_back(manifest.caption(p->caption_id).tokens);
    d.classes.push_back(p->class_id.value_or(-1));
  }
  d.pixels = stack_images(images);
  return d;
}

double split_r1(RetrievalEncoders& enc, const SplitData& d, Level level) {
  torch::NoGradGuard no_grad;
  enc.train(false);
  auto sim = -pairwise_distances(embed_images(enc, d.pixels), embed_texts(enc, d.captions));
  auto m = level == Level::kInstance ? evalkit::diagonal_matrix(sim) : evalkit::class_matrix(sim, d.classes, d.classes);
  return evalkit::recall_at_k(m, 1);
}

}  // namespace

double validation_r1(RetrievalEncoders& enc, const datakit::DatasetManifest& manifest, datakit::Split split,
                     Level level) {
  return split_r1(enc, load_split(manifest, split), level);
}

RetrievalResult train_retrieval(const datakit::DatasetManifest& manifest, const RetrievalConfig& config,
                                augmentor::AugmentContext* augment, std::uint64_t seed,
                                const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate(augment != nullptr);
  const auto train_pairs = manifest.pairs_in(datakit::Split::kTrain);
  if (train_pairs.size() < 2) throw InvalidInput("retrieval training needs at least two training pairs");
  if (config.level == Level::kClass) {
    for (const auto* p : train_pairs) {
      if (!p->class_id) throw ConfigError("class-level retrieval needs class ids on every pair");
    }
  }

  std::vector<datakit::CaptionRecord> records;
  std::vector<Image> images;
  std::vector<augmentor::SourceRecord> sources;
  std::vector<std::int64_t> classes;
  std::unordered_map<std::string, std::int64_t> pair_index;
  for (const auto* p : train_pairs) records.push_back(manifest.caption(p->caption_id));
  for (std::size_t i = 0; i < train_pairs.size(); ++i) {
    const auto* p = train_pairs[i];
    images.push_back(manifest.load_image(p->image_id));
    sources.push_back({&records[i], p->pair_id});
    classes.push_back(p->class_id.value_or(-1));
    pair_index.emplace(p->pair_id, static_cast<std::int64_t>(i));
  }
  const auto pixels = stack_images(images);
  const auto val = load_split(manifest, datakit::Split::kVal);
  const auto n = static_cast<std::int64_t>(records.size());

  RetrievalResult result;
  auto enc = make_encoders(datakit::build_vocab(records), manifest.resolution, config.encoder, seed);
  torch::optim::Adam opt(enc.parameters(), torch::optim::AdamOptions(config.lr));
  TripletConfig triplet{config.margin, config.level, config.mode == TrainMode::kUnpaired};
  std::vector<torch::Tensor> best_image, best_text;
  int global_epoch = 0;

  auto run_phase = [&](const std::string& phase, int epochs, bool use_real, bool use_aug, bool track_best) {
    for (int e = 0; e < epochs; ++e, ++global_epoch) {
      const double lr = config.lr * (e >= config.lr_decay_epoch ? config.lr_decay : 1.0);
      for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
      enc.train(true);
      auto gen = make_torch_generator(derive_seed(seed, site_label({"retrieval/shuffle", phase, std::to_string(e)})));
      auto perm = torch::randperm(n, gen, torch::kInt64);
      std::vector<double> losses;
      for (std::int64_t start = 0; start + 2 <= n; start += config.batch_size) {
        const auto end = std::min(n, start + config.batch_size);
        std::vector<std::int64_t> idx;
        for (auto i = start; i < end; ++i) idx.push_back(perm[i].item<std::int64_t>());

        EmbeddingBatch batch;
        std::vector<torch::Tensor> img_rows;
        std::vector<std::vector<std::string>> txt_rows;
        if (use_real) {
          img_rows.push_back(pixels.index_select(0, torch::tensor(idx)));
          for (auto i : idx) {
            txt_rows.push_back(records[static_cast<std::size_t>(i)].tokens);
            batch.img_pair.push_back(i);
            batch.txt_pair.push_back(i);
            batch.img_class.push_back(classes[static_cast<std::size_t>(i)]);
            batch.txt_class.push_back(classes[static_cast<std::size_t>(i)]);
            batch.img_origin.push_back(Origin::kReal);
            batch.txt_origin.push_back(Origin::kReal);
          }
        }
        if (use_aug && config.aug_scale > 0.0) {
          std::vector<augmentor::SourceRecord> batch_sources;
          for (auto i : idx) batch_sources.push_back(sources[static_cast<std::size_t>(i)]);
          const auto aug_seed =
              derive_seed(seed, site_label({"retrieval/augment", phase, std::to_string(e), std::to_string(start)}));
          auto aug = augmentor::augment_batch(batch_sources, config.replacement, *augment, aug_seed, config.aug_scale);
          std::vector<torch::Tensor> aug_images;
          std::int64_t fresh = n;
          std::int64_t singleton = -2;
          for (const auto& a : aug) {
            const auto src = pair_index.at(a.source_pair_id);
            const auto cls = classes[static_cast<std::size_t>(src)];
            std::int64_t img_label = fresh, txt_label = fresh, img_cls = cls, txt_cls = cls;
            ++fresh;
            bool with_image = true;
            switch (config.mode) {
              case TrainMode::kNoisePair: img_label = txt_label = src; break;
              case TrainMode::kTextOnly: txt_label = src; with_image = false; break;
              case TrainMode::kUnpaired:
                img_label = singleton--;
                txt_label = singleton--;
                img_cls = img_label;
                txt_cls = txt_label;
                break;
              default: break;
            }
            if (with_image) {
              aug_images.push_back(a.image_prime.unsqueeze(0));
              batch.img_pair.push_back(img_label);
              batch.img_class.push_back(img_cls);
              batch.img_origin.push_back(Origin::kAugmented);
            }
            txt_rows.push_back(a.tokens_prime);
            batch.txt_pair.push_back(txt_label);
            batch.txt_class.push_back(txt_cls);
            batch.txt_origin.push_back(Origin::kAugmented);
          }
          if (!aug_images.empty()) img_rows.push_back(torch::cat(aug_images, 0));
        }
        if (txt_rows.empty()) continue;
        batch.f_img = img_rows.empty() ? torch::empty({0, config.encoder.embed_dim})
                                       : embed_images(enc, torch::cat(img_rows, 0));
        batch.f_txt = embed_texts(enc, txt_rows);
        auto loss = batch_hard_triplet_loss(batch, triplet);
        opt.zero_grad();
        loss.backward();
        opt.step();
        const double l = loss.item<double>();
        if (!std::isfinite(l)) throw NumericalError("retrieval loss became non-finite in epoch " + std::to_string(global_epoch));
        losses.push_back(l);
      }
      EpochRecord rec;
      rec.epoch = global_epoch;
      rec.phase = phase;
      for (double l : losses) rec.train_loss += l;
      if (!losses.empty()) rec.train_loss /= static_cast<double>(losses.size());
      rec.val_r1 = split_r1(enc, val, config.level);
      result.history.push_back(rec);
      result.step_losses.push_back(losses);
      if (track_best && rec.val_r1 > result.best_val_r1) {
        result.best_val_r1 = rec.val_r1;
        result.best_epoch = rec.epoch;
        best_image = snapshot_parameters(*enc.image);
        best_text = snapshot_parameters(*enc.text);
      }
      if (on_epoch) on_epoch(rec);
    }
  };

  if (config.mode == TrainMode::kPretrainFinetune) {
    run_phase("pretrain", config.pretrain_epochs, false, true, false);
    run_phase("finetune", config.epochs, true, false, true);
  } else {
    run_phase("train", config.epochs, true, config.mode != TrainMode::kBaseline, true);
  }

  enc.train(false);
  if (!best_image.empty()) {
    restore_parameters(*enc.image, best_image);
    restore_parameters(*enc.text, best_text);
  }
  result.best = enc;
  return result;
}

void save_encoders(RetrievalEncoders& enc, std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_parameters(*enc.image, dir / "image_encoder.bin");
  save_parameters(*enc.text, dir / "text_encoder.bin");
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["embed_dim"] = enc.config.embed_dim;
  j["word_dim"] = enc.config.word_dim;
  j["hidden"] = enc.config.hidden;
  j["channels"] = enc.config.channels;
  j["resolution"] = enc.resolution;
  j["seed"] = seed;
  j["vocab"] = enc.vocab.tokens();
  write_text(dir / "encoders.json", j.dump(2) + "\n");
}

RetrievalEncoders load_encoders(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "encoders.json")) throw ArtifactError("missing retrieval checkpoint in " + dir.string());
  auto j = nlohmann::json::parse(read_text(dir / "encoders.json"));
  EncoderConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.word_dim = j.at("word_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.channels = j.at("channels").get<int>();
  auto enc = make_encoders(datakit::Vocabulary(j.at("vocab").get<std::vector<std::string>>()),
                           j.at("resolution").get<int>(), c, 0);
  load_parameters(*enc.image, dir / "image_encoder.bin");
  load_parameters(*enc.text, dir / "text_encoder.bin");
  enc.train(false);
  return enc;
}

void write_epochs_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,val_r1\n";
  for (const auto& r : history) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g\n", r.epoch, r.phase.c_str(), r.train_loss, r.val_r1);
    os << buf;
  }
  write_text(path, os.str());
}

}  // namespace pcda::retriever
