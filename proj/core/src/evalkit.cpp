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

#include "pcda/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pcda/error.hpp"
#include "pcda/seed.hpp"
#include "pcda/tensor_io.hpp"

namespace pcda::evalkit {
namespace {

DirectionMetrics score_direction(const torch::Tensor& sim, const std::vector<int>& row_cls,
                                 const std::vector<int>& col_cls, bool by_class) {
  const auto m = by_class ? class_matrix(sim, row_cls, col_cls) : diagonal_matrix(sim);
  const int cols = static_cast<int>(sim.size(1));
  DirectionMetrics d;
  d.r1 = recall_at_k(m, std::min(1, cols));
  d.r5 = recall_at_k(m, std::min(5, cols));
  d.r10 = recall_at_k(m, std::min(10, cols));
  if (by_class) d.rp = r_precision(sim, row_cls, col_cls);
  return d;
}

void mean_and_stderr(const std::vector<DirectionMetrics>& v, DirectionMetrics& mean, DirectionMetrics& se) {
  const double k = static_cast<double>(v.size());
  auto stat = [&](auto get, double& m, double& s) {
    m = 0.0;
    for (const auto& x : v) m += get(x);
    m /= k;
    double ss = 0.0;
    for (const auto& x : v) ss += (get(x) - m) * (get(x) - m);
    s = v.size() > 1 ? std::sqrt(ss / (k - 1.0)) / std::sqrt(k) : 0.0;
  };
  stat([](const DirectionMetrics& x) { return x.r1; }, mean.r1, se.r1);
  stat([](const DirectionMetrics& x) { return x.r5; }, mean.r5, se.r5);
  stat([](const DirectionMetrics& x) { return x.r10; }, mean.r10, se.r10);
  if (!v.empty() && v.front().rp) {
    double m = 0.0, s = 0.0;
    stat([](const DirectionMetrics& x) { return *x.rp; }, m, s);
    mean.rp = m;
    se.rp = s;
  }
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string direction_json(const DirectionMetrics& d) {
  std::string s = "{\"r1\": " + fixed4(d.r1) + ", \"r5\": " + fixed4(d.r5) + ", \"r10\": " + fixed4(d.r10);
  if (d.rp) s += ", \"rp\": " + fixed4(*d.rp);
  return s + "}";
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

EmbeddedSplit embed_split(retriever::RetrievalEncoders& enc, const datakit::DatasetManifest& manifest,
                          datakit::Split split) {
  const auto pairs = manifest.pairs_in(split);
  if (pairs.empty()) throw InvalidInput("cannot evaluate an empty split");
  std::vector<Image> images;
  std::vector<std::vector<std::string>> captions;
  EmbeddedSplit e;
  for (const auto* p : pairs) {
    images.push_back(manifest.load_image(p->image_id));
    captions.push_back(manifest.caption(p->caption_id).tokens);
    e.classes.push_back(p->class_id.value_or(-1));
  }
  torch::NoGradGuard no_grad;
  enc.train(false);
  e.f_img = retriever::embed_images(enc, stack_images(images));
  e.f_txt = retriever::embed_texts(enc, captions);
  return e;
}

MetricsReport sampled_recall_protocol(const EmbeddedSplit& split, const ProtocolConfig& config, std::uint64_t seed) {
  const auto size = split.f_img.size(0);
  if (size == 0) throw InvalidInput("cannot evaluate an empty split");
  if (config.repeats < 1 || config.n < 1) throw InvalidInput("protocol needs n >= 1 and repeats >= 1");
  const bool by_class = config.level == retriever::Level::kClass;
  MetricsReport r;
  r.protocol = by_class ? "class" : "instance";
  r.seed = seed;
  r.repeats = config.repeats;
  r.n = static_cast<int>(std::min<std::int64_t>(config.n, size));
  if (r.n < config.n) {
    r.notes.push_back("n clamped from " + std::to_string(config.n) + " to split size " + std::to_string(r.n));
  }
  const auto dist = retriever::pairwise_distances(split.f_img.to(torch::kFloat64), split.f_txt.to(torch::kFloat64));
  for (int rep = 0; rep < config.repeats; ++rep) {
    Rng rng = make_rng(seed, "eval/repeat/" + std::to_string(rep));
    std::vector<std::int64_t> idx(static_cast<std::size_t>(size));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    for (int i = 0; i < r.n; ++i) {
      std::swap(idx[static_cast<std::size_t>(i)], idx[i + uniform_index(rng, static_cast<std::size_t>(size - i))]);
    }
    idx.resize(static_cast<std::size_t>(r.n));
    auto t = torch::tensor(idx);
    auto sim = -dist.index_select(0, t).index_select(1, t);
    std::vector<int> cls;
    for (auto i : idx) cls.push_back(split.classes[static_cast<std::size_t>(i)]);
    r.i2t_repeats.push_back(score_direction(sim, cls, cls, by_class));
    r.t2i_repeats.push_back(score_direction(sim.t().contiguous(), cls, cls, by_class));
  }
  mean_and_stderr(r.i2t_repeats, r.i2t, r.i2t_stderr);
  mean_and_stderr(r.t2i_repeats, r.t2i, r.t2i_stderr);
  return r;
}

MetricsReport sampled_recall_protocol(retriever::RetrievalEncoders& enc, const datakit::DatasetManifest& manifest,
                                      datakit::Split split, const ProtocolConfig& config, std::uint64_t seed) {
  return sampled_recall_protocol(embed_split(enc, manifest, split), config, seed);
}

SemanticScore semantic_consistency_score(const std::vector<std::vector<std::string>>& captions,
                                         const torch::Tensor& images, datakit::AttributeOracle& oracle) {
  if (static_cast<std::int64_t>(captions.size()) != images.size(0)) {
    throw InvalidInput("semantic score: caption and image counts differ");
  }
  SemanticScore s;
  if (captions.empty()) return s;
  const auto pred = datakit::predict_attributes(oracle, images);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto parsed = datakit::parse_caption(captions[i]);
    auto tally = [](AttributeScore& a, const auto& slot, auto predicted) {
      ++a.total;
      if (!slot) return;
      ++a.scored;
      a.correct += *slot == predicted;
    };
    tally(s.shape, parsed.shape, pred[i].shape);
    tally(s.color, parsed.color, pred[i].color);
    tally(s.size, parsed.size, pred[i].size);
    tally(s.bg, parsed.bg, pred[i].bg);
  }
  return s;
}

SemanticScore semantic_consistency_score(const std::vector<augmentor::AugmentedPair>& pairs,
                                         datakit::AttributeOracle& oracle) {
  if (pairs.empty()) return {};
  std::vector<std::vector<std::string>> captions;
  std::vector<torch::Tensor> images;
  for (const auto& p : pairs) {
    captions.push_back(p.tokens_prime);
    images.push_back(p.image_prime.unsqueeze(0));
  }
  return semantic_consistency_score(captions, torch::cat(images, 0), oracle);
}

std::string metrics_json(const MetricsReport& r) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"protocol\": " << json_string(r.protocol) << ",\n";
  os << "  \"seed\": " << r.seed << ",\n";
  os << "  \"n\": " << r.n << ",\n";
  os << "  \"repeats\": " << r.repeats << ",\n";
  os << "  \"i2t\": " << direction_json(r.i2t) << ",\n";
  os << "  \"t2i\": " << direction_json(r.t2i) << ",\n";
  os << "  \"stderr\": {\"i2t\": " << direction_json(r.i2t_stderr) << ", \"t2i\": " << direction_json(r.t2i_stderr)
     << "}";
  if (!r.notes.empty()) {
    os << ",\n  \"notes\": [";
    for (std::size_t i = 0; i < r.notes.size(); ++i) os << (i ? ", " : "") << json_string(r.notes[i]);
    os << "]";
  }
  os << "\n}\n";
  return os.str();
}

std::size_t metric_entry_count(const MetricsReport& r) {
  const std::size_t per = r.i2t.rp ? 4 : 3;
  return 4 * per;  // two directions, mean and stderr each
}

void write_report(const MetricsReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create report directory " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.json", metrics_json(r));
  std::ostringstream csv;
  csv << "direction,statistic,metric,value\n";
  auto rows = [&](const char* dir_name, const char* stat, const DirectionMetrics& d) {
    csv << dir_name << ',' << stat << ",r1," << fixed4(d.r1) << '\n';
    csv << dir_name << ',' << stat << ",r5," << fixed4(d.r5) << '\n';
    csv << dir_name << ',' << stat << ",r10," << fixed4(d.r10) << '\n';
    if (d.rp) csv << dir_name << ',' << stat << ",rp," << fixed4(*d.rp) << '\n';
  };
  rows("i2t", "mean", r.i2t);
  rows("i2t", "stderr", r.i2t_stderr);
  rows("t2i", "mean", r.t2i);
  rows("t2i", "stderr", r.t2i_stderr);
  write_text(dir / "metrics.csv", csv.str());
}

Image montage(const std::vector<std::vector<Image>>& rows) {
  if (rows.empty() || rows.front().empty()) throw InvalidInput("montage needs at least one tile");
  const int th = rows.front().front().height(), tw = rows.front().front().width();
  const int cols = static_cast<int>(rows.front().size());
  constexpr int kGutter = 2;
  const int nrows = static_cast<int>(rows.size());
  Image out(nrows * th + (nrows - 1) * kGutter, cols * tw + (cols - 1) * kGutter);
  out.fill(1.0F, 1.0F, 1.0F);
  for (int r = 0; r < nrows; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != cols) throw InvalidInput("montage rows differ in length");
    for (int c = 0; c < cols; ++c) {
      const auto& tile = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (tile.height() != th || tile.width() != tw) throw InvalidInput("montage tiles differ in size");
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          for (int ch = 0; ch < 3; ++ch) {
            out.at(r * (th + kGutter) + y, c * (tw + kGutter) + x, ch) = tile.at(y, x, ch);
          }
        }
      }
    }
  }
  return out;
}

void write_montage(const std::vector<std::vector<Image>>& rows, const std::vector<std::vector<std::string>>& captions,
                   const std::filesystem::path& png_path) {
  write_png(png_path, montage(rows));
  std::ostringstream os;
  for (const auto& row : captions) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? " | " : "") << row[i];
    os << '\n';
  }
  auto txt = png_path;
  txt.replace_extension(".txt");
  write_text(txt, os.str());
}

}  // namespace pcda::evalkit
