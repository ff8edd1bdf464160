// Copyright 2026 The qmpc Authors
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

#include "qmpc/output.hpp"
#include "qmpc/scenarios.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

qmpc::Params read_config(const std::string& path) {
  if (path.empty()) return nullptr;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return qmpc::Params::parse(in, nullptr, true, true);
}

std::string default_out_dir() {
  const char* env = std::getenv("QMPC_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : "out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model predictive control for quantum state preparation"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario and write its outputs");
  std::string scenario;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  run->add_option("scenario", scenario, "scenario name (see `list`)")->required();
  run->add_option("--config", config_path, "JSON parameter file");
  run->add_option("--set", overrides, "parameter override key=value")->take_all();
  run->add_option("--out", out_dir, "output root (default $QMPC_OUT_DIR or ./out)");
  run->add_option("--seed", seed, "seed for random simplexes");
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list", "list scenarios and their defaults");

  auto* validate = app.add_subcommand("validate", "check a config file");
  std::string validate_path;
  validate->add_option("--config", validate_path, "JSON parameter file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& info : qmpc::scenario_registry()) {
        std::cout << info.name << ": " << info.description << "\n  " << info.defaults.dump() << "\n";
      }
      return 0;
    }
    if (*validate) {
      const qmpc::Params file = read_config(validate_path);
      if (!file.is_object() || !file.contains("scenario")) {
        throw std::invalid_argument("config must be an object with a \"scenario\" key");
      }
      const auto& info = qmpc::find_scenario(file.at("scenario").get<std::string>());
      (void)qmpc::resolve_params(info, file, {});
      std::cout << "ok: " << info.name << "\n";
      return 0;
    }

    qmpc::Params file = read_config(config_path);
    if (file.is_object() && file.contains("scenario") &&
        file.at("scenario").get<std::string>() != scenario) {
      throw std::invalid_argument("config is for scenario " + file.at("scenario").get<std::string>());
    }
    const auto& info = qmpc::find_scenario(scenario);
    const qmpc::Params params = qmpc::resolve_params(info, file, overrides);
    const std::filesystem::path dir =
        std::filesystem::path(out_dir.empty() ? default_out_dir() : out_dir) / scenario;
    qmpc::prepare_output_dir(dir);

    const qmpc::RunOptions opts{jobs, seed};
    const auto start = std::chrono::steady_clock::now();
    const qmpc::ScenarioResult result = info.run(params, opts);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto report = qmpc::emit_outputs(result, params, opts, dir, wall);
    std::cout << result.summary.dump(2) << "\n";
    std::cerr << "wrote " << report.files.size() << " files to " << dir.string() << " in " << wall
              << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
