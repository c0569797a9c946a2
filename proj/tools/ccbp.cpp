// Copyright 2026 The ccbp Authors.
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

// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccbp/ccbp.h"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::size_t jobs = 0;
  std::string artifact_root;
  std::string target;
  bool quiet = false;
};

void AddCommon(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("-s,--set", o.overrides, "Override one key, e.g. --set perturb.epsilon=0.001")
      ->allow_extra_args(false);
  sub->add_option("-j,--jobs", o.jobs, "Parallel image workers (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--artifact-root", o.artifact_root,
                  "Root for data, models and runs (default: $CCBP_ARTIFACT_ROOT or ./artifacts)");
  sub->add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
}

void LogToStderr(const char* message, void*) { std::fprintf(stderr, "[ccbp] %s\n", message); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-contrastive back-propagation explanations"};
  app.set_version_flag("--version", std::string(ccbp_version()));
  app.require_subcommand(1);

  Options o;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"explain", "Explanation maps and overlays for dataset images"},
      {"contrast", "Contrastive maps (original, mean, max or weighted)"},
      {"perturb", "Iterative sign perturbation along contrastive gradients"},
      {"ablate", "Blur and mask ablation of top-ranked features"},
      {"visualize", "Grids of original and weighted explanations"},
      {"regress", "Regression of gradient norm on logit value"},
      {"verify", "Check the softmax-seed equivalence identity"},
      {"bootstrap", "Generate the toy data and train the toy models"},
  };
  for (const auto& [name, help] : commands) AddCommon(app.add_subcommand(name, help), o);
  CLI::App* reproduce = app.add_subcommand("reproduce", "Run one experiment bundle end to end");
  AddCommon(reproduce, o);
  reproduce->add_option("target", o.target, "fig3, fig4, fig5, table1, table3 or regression")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig4", "fig5", "table1", "table3", "regression"}));

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  if (!o.quiet) ccbp_set_log_callback(LogToStderr, nullptr);
  std::vector<const char*> overrides;
  for (const auto& s : o.overrides) overrides.push_back(s.c_str());

  int exit_code = 0;
  char* summary = nullptr;
  const ccbp_status status =
      ccbp_run(command.c_str(), o.target.empty() ? nullptr : o.target.c_str(),
               o.config.empty() ? nullptr : o.config.c_str(), overrides.data(), overrides.size(),
               o.artifact_root.empty() ? nullptr : o.artifact_root.c_str(), o.jobs, &exit_code,
               &summary);
  if (status != CCBP_OK) {
    std::fprintf(stderr, "ccbp: %s: %s\n", ccbp_status_name(status), ccbp_last_error());
    return static_cast<int>(status);
  }
  std::printf("%s\n", summary);
  ccbp_string_free(summary);
  if (exit_code != 0) std::fprintf(stderr, "ccbp: run finished with exit code %d\n", exit_code);
  return exit_code;
}
