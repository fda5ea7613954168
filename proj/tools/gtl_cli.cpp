/* Copyright 2026 The GTL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gtl/cli/commands.hpp"

namespace {

struct Globals {
  std::string config;
  std::vector<std::string> overrides;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gtl: cross-modal few-shot learning with a generative transfer model"};
  app.require_subcommand(1);

  Globals g;
  std::string seed, out;
  app.add_option("--config", g.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "run seed (default 0)");
  app.add_option("--out", out, "output directory (default out)");
  app.add_option("--set", g.overrides, "override, section.key=value (repeatable)");

  using Command = int (*)(const gtl::cli::RunConfig&, std::ostream&);
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"synth", {"write synthetic base/novel feature files", gtl::cli::cmd_synth}},
      {"train-base", {"Phase 1 on the base set", gtl::cli::cmd_train_base}},
      {"adapt", {"Phase 2 on one episode per protocol and k", gtl::cli::cmd_adapt}},
      {"eval", {"episode evaluation, writes metrics.csv/json", gtl::cli::cmd_eval}},
      {"sweep-d", {"accuracy across latent-domain counts", gtl::cli::cmd_sweep_d}},
      {"gradcheck", {"finite-difference check of the full model", gtl::cli::cmd_gradcheck}},
  };
  Command chosen = nullptr;
  for (const auto& [name, info] : commands) {
    auto* sub = app.add_subcommand(name, info.first);
    sub->fallthrough();
    sub->callback([&chosen, fn = info.second] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gtl::cli::kOk : gtl::cli::kUsageError;
  }

  try {
    gtl::cli::RunConfig cfg = gtl::cli::load_run_config(g.config, g.overrides);
    if (!seed.empty()) gtl::cli::apply_setting(cfg, "run", "seed", seed);
    if (!out.empty()) gtl::cli::apply_setting(cfg, "run", "out", out);
    gtl::cli::finalize(cfg);
    return chosen(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return gtl::cli::kUsageError;
}
