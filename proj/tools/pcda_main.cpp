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

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pcda/error.hpp"
#include "pcda/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string preset;
  std::string root;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool json = false;
  bool quiet = false;
  std::string grid = "r";
};

pcda::PipelineConfig resolve_config(const Options& o) {
  if (!o.config_path.empty() && !o.preset.empty()) throw pcda::ConfigError("use either --config or --preset, not both");
  pcda::PipelineConfig c = !o.config_path.empty() ? pcda::load_config(o.config_path)
                           : !o.preset.empty()    ? pcda::preset(o.preset)
                                                  : pcda::preset("quickstart");
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

void print(const Options& o, const pcda::StageSummary& s) {
  if (o.json) {
    std::cout << pcda::summary_json(s).dump() << std::endl;
  } else {
    std::cout << s.stage << (s.skipped ? ": up to date" : ": done") << " -> " << s.output.string() << std::endl;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Paired cross-modal data augmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(pcda::version_string()));
  Options o;
  app.add_option("-c,--config", o.config_path, "YAML pipeline config");
  app.add_option("-p,--preset", o.preset, "Named preset (quickstart, acceptance, paper-table1, paper-table2, paper-table3)");
  app.add_option("-r,--root", o.root, "Artifact root (overrides PCDA_ARTIFACT_ROOT and the config)");
  app.add_option("-s,--seed", o.seed, "Root seed override");
  app.add_flag("-f,--force", o.force, "Re-run stages even when up to date");
  app.add_flag("--json", o.json, "Print one JSON summary per stage");
  app.add_flag("-q,--quiet", o.quiet, "No progress output");

  struct Command {
    const char* name;
    const char* help;
    pcda::StageSummary (pcda::Pipeline::*stage)();
  };
  const Command commands[] = {
      {"make-data", "Generate or validate the dataset", &pcda::Pipeline::make_data},
      {"train-oracle", "Train the attribute oracle", &pcda::Pipeline::train_oracle},
      {"train-gan", "Train the style-based generator", &pcda::Pipeline::train_gan},
      {"project", "Project training images into W", &pcda::Pipeline::project},
      {"train-align", "Align caption encodings with projected codes", &pcda::Pipeline::train_align},
      {"augment", "Score augmented pairs and optionally pre-generate them", &pcda::Pipeline::augment},
      {"train-retrieval", "Train the retrieval encoders", &pcda::Pipeline::train_retrieval},
      {"evaluate", "Sampled Recall@K on the test split", &pcda::Pipeline::evaluate},
      {"report", "Montage and run summary", &pcda::Pipeline::report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) subs.emplace_back(app.add_subcommand(c.name, c.help), &c);
  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid and print its table");
  ablate->add_option("--grid", o.grid, "r, strategy or table3")->check(CLI::IsMember({"r", "strategy", "table3"}));
  auto* show = app.add_subcommand("show-config", "Print the resolved config as YAML");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto config = resolve_config(o);
    if (show->parsed()) {
      std::cout << pcda::to_yaml(config);
      return 0;
    }
    const auto root = pcda::resolve_artifact_root(config, o.root.empty() ? std::nullopt
                                                                          : std::optional<std::filesystem::path>(o.root));
    pcda::Pipeline pipeline(config, root, o.force, o.quiet || o.json ? nullptr : &std::cerr);
    for (const auto& [sub, cmd] : subs) {
      if (sub->parsed()) print(o, (pipeline.*(cmd->stage))());
    }
    if (run_all->parsed()) {
      for (const auto& s : pipeline.run_all()) print(o, s);
    }
    if (ablate->parsed()) {
      const auto table = pipeline.ablate(pcda::ablation_grid_from_name(o.grid));
      if (o.json) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& row : table.rows) {
          j.push_back({{"setting", row.arm.label}, {"r1", row.r1}, {"r5", row.r5}, {"r10", row.r10},
                       {"seed_r1", row.seed_r1}});
        }
        std::cout << j.dump() << std::endl;
      } else {
        std::cout << pcda::ablation_markdown(table);
      }
    }
  } catch (const pcda::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
