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
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pcda/datakit.hpp"
#include "pcda/ganlite.hpp"
#include "pcda/projector.hpp"

namespace pcda::aligner {

struct AlignConfig {
  int embed_dim = 64;
  int hidden = 128;
  int d_w = 128;
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 32;
};

// Token ids for an embedding table whose row 0 is the UNK embedding.
std::vector<std::int64_t> token_ids(const datakit::Vocabulary& vocab, const std::vector<std::string>& tokens);

// Embedding -> one-layer bidirectional LSTM -> [h_fwd; h_bwd] -> linear head.
// Variable-length batches are packed, so each row only sees its own tokens.
struct TextAlignEncoderImpl : torch::nn::Module {
  TextAlignEncoderImpl(std::int64_t vocab_size, const AlignConfig& config);
  torch::Tensor forward(const std::vector<std::vector<std::int64_t>>& batch);

  torch::nn::Embedding embedding{nullptr};
  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear head{nullptr};
  int d_w;
};
TORCH_MODULE(TextAlignEncoder);

// Encoder plus the vocabulary it was trained with.
struct AlignmentModel {
  TextAlignEncoder encoder{nullptr};
  datakit::Vocabulary vocab;
  AlignConfig config;
};

AlignmentModel make_alignment_model(const datakit::Vocabulary& vocab, const AlignConfig& config, std::uint64_t seed);

// t = E_l(S) for one caption. Throws InvalidInput on an empty caption.
torch::Tensor encode_text_to_w(AlignmentModel& model, const std::vector<std::string>& tokens);
torch::Tensor encode_texts_to_w(AlignmentModel& model, const std::vector<std::vector<std::string>>& captions);

// ||w_opt - t||^2, averaged over rows for batched [N, d] inputs. Throws
// InvalidInput on a shape mismatch.
torch::Tensor align_loss(const torch::Tensor& t, const torch::Tensor& w_opt);

struct AlignStepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct AlignResult {
  AlignmentModel model;
  std::vector<AlignStepRecord> history;  // one entry per optimizer step
  double train_loss = 0.0;               // mean align_loss over the training captions after training
  double baseline_loss = 0.0;            // same, predicting mu_w for every caption
};

// Regresses every training caption onto its image's projected code. The
// store is read-only. Throws InvalidInput when a caption's image has no row.
AlignResult train_alignment(const datakit::DatasetManifest& manifest, const projector::LatentStore& store,
                            const AlignConfig& config, std::uint64_t seed);

// Mean align_loss of the model over captions and their target rows.
double mean_align_loss(AlignmentModel& model, const std::vector<std::vector<std::string>>& captions,
                       const torch::Tensor& targets);

// G(E_l(S)): [3, H, W] for one caption, [N, 3, H, W] for many.
torch::Tensor text_to_image(AlignmentModel& model, ganlite::GanModel& gan, const std::vector<std::string>& tokens);
torch::Tensor texts_to_images(AlignmentModel& model, ganlite::GanModel& gan,
                              const std::vector<std::vector<std::string>>& captions);

void save_alignment(AlignmentModel& model, std::uint64_t seed, const std::filesystem::path& dir);
AlignmentModel load_alignment(const std::filesystem::path& dir);
void write_align_history(const std::vector<AlignStepRecord>& history, const std::filesystem::path& path);

}  // namespace pcda::aligner
