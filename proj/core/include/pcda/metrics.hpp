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

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pcda::evalkit {

// Query rows against gallery columns; larger values rank first.
struct SimilarityMatrix {
  torch::Tensor values;  // [rows, cols], float64
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  std::vector<std::vector<std::int64_t>> positives;  // per row, column indices

  // Throws InvalidInput on non-finite values, shape mismatches or empty
  // positive sets.
  void validate() const;
};

// Diagonal positives, as in paired instance retrieval.
SimilarityMatrix diagonal_matrix(const torch::Tensor& values);
// Positives are columns sharing the row's class.
SimilarityMatrix class_matrix(const torch::Tensor& values, const std::vector<int>& row_classes,
                              const std::vector<int>& col_classes);

// Percent of rows with a positive among the top-k columns. Ties rank the
// lower column id first. Throws InvalidInput for k <= 0 or k > cols.
double recall_at_k(const SimilarityMatrix& sim, int k);

// Mean over queries of |positives in top-R| / R, R = gallery members of the
// query's class, times 100. Throws InvalidInput when a class has no member.
double r_precision(const torch::Tensor& values, const std::vector<int>& row_classes,
                   const std::vector<int>& col_classes);

}  // namespace pcda::evalkit
