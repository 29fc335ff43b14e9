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


// Brute-force reference implementations shared by the unit and acceptance
// tests. Written for clarity only; nothing here is vectorized.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pcda/retriever.hpp"
#include "pcda/seed.hpp"

namespace pcda::testing {

using Matrix = std::vector<std::vector<double>>;

// Column order for one row: descending score, ties to the lower column.
inline std::vector<std::size_t> ranking(const std::vector<double>& row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

inline double loop_recall(const Matrix& m, const std::vector<std::vector<std::int64_t>>& positives, int k) {
  int hits = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto order = ranking(m[i]);
    bool hit = false;
    for (int q = 0; q < k; ++q) {
      for (auto p : positives[i]) hit = hit || static_cast<std::int64_t>(order[q]) == p;
    }
    hits += hit;
  }
  return 100.0 * hits / static_cast<double>(m.size());
}

inline double loop_r_precision(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  double total = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto order = ranking(m[i]);
    int r = 0;
    for (int c : cols) r += c == rows[i];
    int hit = 0;
    for (int q = 0; q < r; ++q) hit += cols[order[q]] == rows[i];
    total += static_cast<double>(hit) / r;
  }
  return 100.0 * total / static_cast<double>(m.size());
}

inline torch::Tensor to_tensor(const Matrix& m) {
  auto t = torch::zeros({static_cast<std::int64_t>(m.size()), static_cast<std::int64_t>(m[0].size())},
                        torch::kFloat64);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) t[i][j] = m[i][j];
  }
  return t;
}

// Random matrix; a coarse grid of values half the time so ties occur.
inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const bool coarse = uniform_index(rng, 2) == 0;
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m) {
    for (auto& v : row) v = coarse ? static_cast<double>(uniform_index(rng, 4)) / 4.0 : uniform_real(rng) * 2 - 1;
  }
  return m;
}

inline double euclid(const torch::Tensor& a, const torch::Tensor& b, std::int64_t i, std::int64_t j) {
  double s = 0;
  for (std::int64_t c = 0; c < a.size(1); ++c) {
    const double d = a[i][c].item<double>() - b[j][c].item<double>();
    s += d * d;
  }
  return std::sqrt(s);
}

// Enumerates every (anchor, positive, negative) triple. Positives share the
// label in the other modality; negatives carry another label in either one.
inline double loop_triplet(const retriever::EmbeddingBatch& b, double margin) {
  struct Row {
    torch::Tensor src;
    std::int64_t idx;
    int modality;
    std::int64_t label;
  };
  std::vector<Row> all;
  for (std::size_t i = 0; i < b.img_pair.size(); ++i) all.push_back({b.f_img, static_cast<std::int64_t>(i), 0, b.img_pair[i]});
  for (std::size_t i = 0; i < b.txt_pair.size(); ++i) all.push_back({b.f_txt, static_cast<std::int64_t>(i), 1, b.txt_pair[i]});
  double total = 0;
  int anchors = 0;
  for (const auto& a : all) {
    double worst = 0;
    bool any_triplet = false;
    for (const auto& p : all) {
      if (p.modality == a.modality || p.label != a.label) continue;
      for (const auto& n : all) {
        if (n.label == a.label) continue;
        const double loss = std::max(0.0, euclid(a.src, p.src, a.idx, p.idx) - euclid(a.src, n.src, a.idx, n.idx) + margin);
        worst = any_triplet ? std::max(worst, loss) : loss;
        any_triplet = true;
      }
    }
    if (any_triplet) {
      total += worst;
      ++anchors;
    }
  }
  return anchors == 0 ? std::numeric_limits<double>::quiet_NaN() : total / anchors;
}

// Paired batch of n images and n captions over `labels` distinct pair ids,
// every label present in both modalities.
inline retriever::EmbeddingBatch random_batch(Rng& rng, std::int64_t n, std::int64_t dim, int labels) {
  retriever::EmbeddingBatch b;
  auto gen = make_torch_generator(rng());
  b.f_img = torch::nn::functional::normalize(torch::randn({n, dim}, gen, torch::kFloat64),
                                             torch::nn::functional::NormalizeFuncOptions().dim(1));
  b.f_txt = torch::nn::functional::normalize(torch::randn({n, dim}, gen, torch::kFloat64),
                                             torch::nn::functional::NormalizeFuncOptions().dim(1));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto l = static_cast<std::int64_t>(i < labels ? i : uniform_index(rng, labels));
    b.img_pair.push_back(l);
  }
  b.txt_pair = b.img_pair;
  std::shuffle(b.txt_pair.begin(), b.txt_pair.end(), rng);
  b.img_class = b.img_pair;
  b.txt_class = b.txt_pair;
  b.img_origin.assign(n, retriever::Origin::kReal);
  b.txt_origin.assign(n, retriever::Origin::kReal);
  return b;
}

}  // namespace pcda::testing
