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

#include "pcda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcda/error.hpp"

namespace pcda::evalkit {
namespace {

torch::Tensor as_double(const torch::Tensor& t) { return t.to(torch::kFloat64).contiguous(); }

// Position of column j in row i's ranking (0 = first).
std::int64_t rank_of(const double* row, std::int64_t cols, std::int64_t j) {
  const double v = row[j];
  std::int64_t r = 0;
  for (std::int64_t c = 0; c < cols; ++c) {
    if (row[c] > v || (row[c] == v && c < j)) ++r;
  }
  return r;
}

}  // namespace

void SimilarityMatrix::validate() const {
  if (values.dim() != 2) throw InvalidInput("similarity matrix must be 2-D");
  if (static_cast<std::int64_t>(positives.size()) != values.size(0)) {
    throw InvalidInput("similarity matrix: one positive set per row required");
  }
  if (!torch::isfinite(values).all().item<bool>()) throw InvalidInput("similarity matrix has non-finite values");
  for (const auto& p : positives) {
    if (p.empty()) throw InvalidInput("similarity matrix row without positives");
    for (auto c : p) {
      if (c < 0 || c >= values.size(1)) throw InvalidInput("positive column out of range");
    }
  }
}

SimilarityMatrix diagonal_matrix(const torch::Tensor& values) {
  SimilarityMatrix s;
  s.values = as_double(values);
  for (std::int64_t i = 0; i < values.size(0); ++i) s.positives.push_back({i});
  return s;
}

SimilarityMatrix class_matrix(const torch::Tensor& values, const std::vector<int>& row_classes,
                              const std::vector<int>& col_classes) {
  SimilarityMatrix s;
  s.values = as_double(values);
  for (auto rc : row_classes) {
    std::vector<std::int64_t> p;
    for (std::size_t c = 0; c < col_classes.size(); ++c) {
      if (col_classes[c] == rc) p.push_back(static_cast<std::int64_t>(c));
    }
    s.positives.push_back(std::move(p));
  }
  return s;
}

double recall_at_k(const SimilarityMatrix& sim, int k) {
  sim.validate();
  const auto rows = sim.values.size(0), cols = sim.values.size(1);
  if (k <= 0) throw InvalidInput("recall_at_k: k must be positive");
  if (k > cols) throw InvalidInput("recall_at_k: k exceeds gallery size");
  const auto v = as_double(sim.values);
  const double* data = v.data_ptr<double>();
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = data + i * cols;
    for (auto j : sim.positives[static_cast<std::size_t>(i)]) {
      if (rank_of(row, cols, j) < k) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rows);
}

double r_precision(const torch::Tensor& values, const std::vector<int>& row_classes,
                   const std::vector<int>& col_classes) {
  const auto v = as_double(values);
  const auto rows = v.size(0), cols = v.size(1);
  if (static_cast<std::int64_t>(row_classes.size()) != rows || static_cast<std::int64_t>(col_classes.size()) != cols) {
    throw InvalidInput("r_precision: class lists must match matrix shape");
  }
  if (rows == 0) throw InvalidInput("r_precision: no queries");
  const double* data = v.data_ptr<double>();
  std::vector<std::int64_t> order(static_cast<std::size_t>(cols));
  double total = 0.0;
  for (std::int64_t i = 0; i < rows; ++i) {
    const int cls = row_classes[static_cast<std::size_t>(i)];
    const auto r = std::count(col_classes.begin(), col_classes.end(), cls);
    if (r == 0) throw InvalidInput("r_precision: query class " + std::to_string(cls) + " absent from gallery");
    const double* row = data + i * cols;
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::partial_sort(order.begin(), order.begin() + r, order.end(), [&](std::int64_t a, std::int64_t b) {
      return row[a] > row[b] || (row[a] == row[b] && a < b);
    });
    std::int64_t hit = 0;
    for (std::int64_t q = 0; q < r; ++q) hit += col_classes[static_cast<std::size_t>(order[static_cast<std::size_t>(q)])] == cls;
    total += static_cast<double>(hit) / static_cast<double>(r);
  }
  return 100.0 * total / static_cast<double>(rows);
}

}  // namespace pcda::evalkit
