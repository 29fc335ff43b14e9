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
#include <random>
#include <string>
#include <string_view>

#include <ATen/core/Generator.h>

namespace pcda {

using Rng = std::mt19937_64;

// Stable 64-bit hash of a site label (FNV-1a followed by a splitmix64 finalizer).
std::uint64_t hash_label(std::string_view label);

// Seed for the stochastic site `label` under `root`. Every random draw in the
// pipeline goes through a stream derived this way, so results do not depend on
// call order between sites.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

// Convenience: derive_seed over "a/b/c" style labels built from parts.
std::string site_label(std::initializer_list<std::string_view> parts);

Rng make_rng(std::uint64_t root, std::string_view label);

// CPU torch generator seeded from a derived stream.
at::Generator make_torch_generator(std::uint64_t seed);

// Uniform index in [0, n) drawn from `rng`. Implemented without
// std::uniform_int_distribution so the sequence is identical across standard
// library implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);

// Uniform real in [0, 1).
double uniform_real(Rng& rng);

}  // namespace pcda
