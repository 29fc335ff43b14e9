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

#include "pcda/aligner.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "pcda/error.hpp"
#include "pcda/hashing.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::aligner {
namespace {

std::string vocab_hash(const datakit::Vocabulary& vocab) {
  std::string joined;
  for (const auto& t : vocab.tokens()) {
    joined += t;
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

}  // namespace

std::vector<std::int64_t> token_ids(const datakit::Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto i = vocab.find(t);
    ids.push_back(i ? static_cast<std::int64_t>(*i) + 1 : 0);
  }
  return ids;
}

TextAlignEncoderImpl::TextAlignEncoderImpl(std::int64_t vocab_size, const AlignConfig& config) : d_w(config.d_w) {
  embedding = register_module("embedding", torch::nn::Embedding(vocab_size + 1, config.embed_dim));
  lstm = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(config.embed_dim, config.hidden)
                                                     .num_layers(1)
                                                     .batch_first(true)
                                                     .bidirectional(true)));
  head = register_module("head", torch::nn::Linear(2 * config.hidden, config.d_w));
}

torch::Tensor TextAlignEncoderImpl::forward(const std::vector<std::vector<std::int64_t>>& batch) {
  if (batch.empty()) throw InvalidInput("text encoder: empty batch");
  std::size_t max_len = 0;
  for (const auto& b : batch) {
    if (b.empty()) throw InvalidInput("text encoder: empty token list");
    max_len = std::max(max_len, b.size());
  }
  auto ids = torch::zeros({static_cast<std::int64_t>(batch.size()), static_cast<std::int64_t>(max_len)}, torch::kInt64);
  std::vector<std::int64_t> lengths;
  auto acc = ids.accessor<std::int64_t, 2>();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch[i].size(); ++j) acc[i][j] = batch[i][j];
    lengths.push_back(static_cast<std::int64_t>(batch[i].size()));
  }
  auto packed = torch::nn::utils::rnn::pack_padded_sequence(embedding(ids), torch::tensor(lengths),
                                                            /*batch_first=*/true, /*enforce_sorted=*/false);
  auto [out, state] = lstm->forward_with_packed_input(packed);
  auto h_n = std::get<0>(state);  // [2, B, hidden], already in input order
  return head(torch::cat({h_n[0], h_n[1]}, 1));
}

AlignmentModel make_alignment_model(const datakit::Vocabulary& vocab, const AlignConfig& config, std::uint64_t seed) {
  torch::manual_seed(derive_seed(seed, "align/init"));
  AlignmentModel m;
  m.vocab = vocab;
  m.config = config;
  m.encoder = TextAlignEncoder(static_cast<std::int64_t>(vocab.size()), config);
  return m;
}

torch::Tensor encode_texts_to_w(AlignmentModel& model, const std::vector<std::vector<std::string>>& captions) {
  std::vector<std::vector<std::int64_t>> ids;
  ids.reserve(captions.size());
  for (const auto& c : captions) {
    if (c.empty()) throw InvalidInput("encode_text_to_w: empty caption");
    ids.push_back(token_ids(model.vocab, c));
  }
  model.encoder->eval();
  torch::NoGradGuard no_grad;
  return model.encoder->forward(ids);
}

torch::Tensor encode_text_to_w(AlignmentModel& model, const std::vector<std::string>& tokens) {
  return encode_texts_to_w(model, {tokens}).squeeze(0);
}

torch::Tensor align_loss(const torch::Tensor& t, const torch::Tensor& w_opt) {
  if (!t.sizes().equals(w_opt.sizes())) throw InvalidInput("align_loss: dimension mismatch");
  auto sq = (w_opt - t).pow(2);
  if (t.dim() == 1) return sq.sum();
  return sq.sum(-1).mean();
}

double mean_align_loss(AlignmentModel& model, const std::vector<std::vector<std::string>>& captions,
                       const torch::Tensor& targets) {
  double total = 0.0;
  const auto n = static_cast<std::int64_t>(captions.size());
  for (std::int64_t start = 0; start < n; start += 256) {
    const auto end = std::min(n, start + 256);
    std::vector<std::vector<std::string>> chunk(captions.begin() + start, captions.begin() + end);
    auto t = encode_texts_to_w(model, chunk);
    total += align_loss(t, targets.slice(0, start, end).to(t.dtype())).item<double>() * static_cast<double>(end - start);
  }
  return total / static_cast<double>(n);
}

AlignResult train_alignment(const datakit::DatasetManifest& manifest, const projector::LatentStore& store,
                            const AlignConfig& config, std::uint64_t seed) {
  std::vector<std::vector<std::string>> captions;
  std::vector<std::int64_t> rows;
  std::vector<datakit::CaptionRecord> train_records;
  for (const auto* p : manifest.pairs_in(datakit::Split::kTrain)) {
    const auto& c = manifest.caption(p->caption_id);
    std::int64_t row = -1;
    for (std::size_t i = 0; i < store.ids.size(); ++i) {
      if (store.ids[i] == c.image_id) {
        row = static_cast<std::int64_t>(i);
        break;
      }
    }
    if (row < 0) throw InvalidInput("caption " + c.caption_id + " references image " + c.image_id +
                                    " which has no projected latent code");
    captions.push_back(c.tokens);
    rows.push_back(row);
    train_records.push_back(c);
  }
  if (captions.empty()) throw InvalidInput("train_alignment: no training captions");
  if (store.w.size(1) != config.d_w) throw InvalidInput("train_alignment: latent store d_w differs from config");

  const auto targets = store.w.index_select(0, torch::tensor(rows)).to(torch::kFloat32).detach();
  AlignResult result;
  result.model = make_alignment_model(datakit::build_vocab(train_records), config, seed);
  auto& enc = result.model.encoder;
  std::vector<std::vector<std::int64_t>> ids;
  for (const auto& c : captions) ids.push_back(token_ids(result.model.vocab, c));

  torch::optim::Adam opt(enc->parameters(), torch::optim::AdamOptions(config.lr));
  const auto n = static_cast<std::int64_t>(captions.size());
  auto gen = make_torch_generator(derive_seed(seed, "align/shuffle"));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    enc->train();
    auto perm = torch::randperm(n, gen, torch::kInt64);
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto end = std::min(n, start + config.batch_size);
      std::vector<std::vector<std::int64_t>> batch;
      std::vector<std::int64_t> idx;
      for (auto i = start; i < end; ++i) {
        const auto j = perm[i].item<std::int64_t>();
        batch.push_back(ids[j]);
        idx.push_back(j);
      }
      auto loss = align_loss(enc->forward(batch), targets.index_select(0, torch::tensor(idx)));
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw NumericalError("alignment loss became non-finite at step " + std::to_string(step));
      result.history.push_back({step++, epoch, l});
    }
  }
  enc->eval();
  result.train_loss = mean_align_loss(result.model, captions, targets);
  result.baseline_loss = align_loss(store.stats.mu_w.unsqueeze(0).expand_as(targets), targets).item<double>();
  return result;
}

torch::Tensor texts_to_images(AlignmentModel& model, ganlite::GanModel& gan,
                              const std::vector<std::vector<std::string>>& captions) {
  std::vector<torch::Tensor> out;
  const auto n = captions.size();
  for (std::size_t start = 0; start < n; start += 128) {
    const auto end = std::min(n, start + 128);
    std::vector<std::vector<std::string>> chunk(captions.begin() + static_cast<std::ptrdiff_t>(start),
                                                captions.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(ganlite::synthesize(gan, encode_texts_to_w(model, chunk)));
  }
  return torch::cat(out, 0);
}

torch::Tensor text_to_image(AlignmentModel& model, ganlite::GanModel& gan, const std::vector<std::string>& tokens) {
  return ganlite::synthesize(gan, encode_text_to_w(model, tokens)).squeeze(0);
}

void save_alignment(AlignmentModel& model, std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_parameters(*model.encoder, dir / "encoder.bin");
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["d_w"] = model.config.d_w;
  j["vocab_hash"] = vocab_hash(model.vocab);
  j["seed"] = seed;
  j["embed_dim"] = model.config.embed_dim;
  j["hidden"] = model.config.hidden;
  j["vocab"] = model.vocab.tokens();
  write_text(dir / "encoder.json", j.dump(2) + "\n");
}

AlignmentModel load_alignment(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "encoder.json")) {
    throw ArtifactError("missing alignment checkpoint in " + dir.string());
  }
  auto j = nlohmann::json::parse(read_text(dir / "encoder.json"));
  AlignConfig c;
  c.d_w = j.at("d_w").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  datakit::Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
  if (vocab_hash(vocab) != j.at("vocab_hash").get<std::string>()) {
    throw ArtifactError("alignment checkpoint vocabulary does not match its hash");
  }
  AlignmentModel m = make_alignment_model(vocab, c, 0);
  load_parameters(*m.encoder, dir / "encoder.bin");
  m.encoder->eval();
  return m;
}

void write_align_history(const std::vector<AlignStepRecord>& history, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "step,epoch,loss\n";
  for (const auto& r : history) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g\n", static_cast<long long>(r.step), r.epoch, r.loss);
    os << buf;
  }
  write_text(path, os.str());
}

}  // namespace pcda::aligner
