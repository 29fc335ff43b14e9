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
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pcda/augmentor.hpp"
#include "pcda/datakit.hpp"

namespace pcda::retriever {

struct EncoderConfig {
  int embed_dim = 128;
  int word_dim = 64;
  int hidden = 128;
  int channels = 32;
};

// Conv trunk with mean and max pooling, projected and L2-normalized. No
// batch statistics, so every row depends only on its own input.
struct ImageEncoderImpl : torch::nn::Module {
  explicit ImageEncoderImpl(const EncoderConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(ImageEncoder);

struct TextEncoderImpl : torch::nn::Module {
  TextEncoderImpl(std::int64_t vocab_size, const EncoderConfig& config);
  torch::Tensor forward(const std::vector<std::vector<std::int64_t>>& ids);
  torch::nn::Embedding embedding{nullptr};
  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(TextEncoder);

struct RetrievalEncoders {
  ImageEncoder image{nullptr};
  TextEncoder text{nullptr};
  datakit::Vocabulary vocab;
  EncoderConfig config;
  int resolution = 0;

  std::vector<torch::Tensor> parameters() const;
  void train(bool on);
};

RetrievalEncoders make_encoders(const datakit::Vocabulary& vocab, int resolution, const EncoderConfig& config,
                                std::uint64_t seed);

// Unit-norm rows. Inference mode when called outside training; throws
// InvalidInput on an empty batch.
torch::Tensor embed_images(RetrievalEncoders& enc, const torch::Tensor& pixels);
torch::Tensor embed_texts(RetrievalEncoders& enc, const std::vector<std::vector<std::string>>& captions);

enum class Origin { kReal, kAugmented };

// Rows of each modality carry their own labels, so a batch may hold texts
// without images (augmented text only).
struct EmbeddingBatch {
  torch::Tensor f_img, f_txt;
  std::vector<std::int64_t> img_pair, txt_pair;
  std::vector<std::int64_t> img_class, txt_class;
  std::vector<Origin> img_origin, txt_origin;
};

enum class Level { kInstance, kClass };

struct TripletConfig {
  double margin = 0.3;
  Level level = Level::kInstance;
  bool skip_unpaired = false;  // anchors without a positive are dropped instead of rejected
};

// D[i][j] = ||A_i - B_j||_2 with a zero gradient at zero distance.
torch::Tensor pairwise_distances(const torch::Tensor& a, const torch::Tensor& b);

// Mean over anchors of max(0, max d_ap - min d_an + m). Positives are
// opposite-modality rows with the anchor's label; negatives are rows of
// either modality with another label.
torch::Tensor batch_hard_triplet_loss(const EmbeddingBatch& batch, const TripletConfig& config);

enum class TrainMode { kJoint, kPretrainFinetune, kNoisePair, kTextOnly, kUnpaired, kBaseline };
std::string_view mode_name(TrainMode m);
TrainMode mode_from_name(std::string_view name);  // throws ConfigError

struct RetrievalConfig {
  EncoderConfig encoder;
  TrainMode mode = TrainMode::kPretrainFinetune;
  augmentor::ReplacementConfig replacement;
  double aug_scale = 1.0;
  int epochs = 40;
  int pretrain_epochs = 10;
  int batch_size = 32;
  double lr = 1e-4;
  int lr_decay_epoch = 30;
  double lr_decay = 0.1;
  double margin = 0.3;
  Level level = Level::kInstance;

  // Throws ConfigError on contradictory settings.
  void validate(bool have_augmentation) const;
};

struct EpochRecord {
  int epoch = 0;
  std::string phase;
  double train_loss = 0.0;
  double val_r1 = 0.0;
};

struct RetrievalResult {
  RetrievalEncoders best;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_r1 = -1.0;
  std::vector<std::vector<double>> step_losses;  // per epoch
};

// Validation R@1 (image to text) over the whole split.
double validation_r1(RetrievalEncoders& enc, const datakit::DatasetManifest& manifest, datakit::Split split,
                     Level level);

// `augment` may be null for baseline runs.
RetrievalResult train_retrieval(const datakit::DatasetManifest& manifest, const RetrievalConfig& config,
                                augmentor::AugmentContext* augment, std::uint64_t seed,
                                const std::function<void(const EpochRecord&)>& on_epoch = {});

void save_encoders(RetrievalEncoders& enc, std::uint64_t seed, const std::filesystem::path& dir);
RetrievalEncoders load_encoders(const std::filesystem::path& dir);
void write_epochs_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace pcda::retriever
