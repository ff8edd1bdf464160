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

#pragma once

#include "qmpc/scenarios.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace qmpc {

inline constexpr const char* kVersion = "0.1.0";

/// Creates the directory and checks that a file can be written inside it.
/// Throws std::runtime_error otherwise.
void prepare_output_dir(const std::filesystem::path& dir);

/// Columns: time_ns, u_1..u_m, rho_re_<i>_<j>, rho_im_<i>_<j> (row-major),
/// infidelity, flags. The control on a row is the one applied from that time
/// on; the final row leaves the controls empty.
std::string record_csv(const TrajectoryRecord& rec);
std::string table_csv(const Table& table);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line plot; non-positive values are dropped on a log axis.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series,
                          bool log_y = false);

/// Cell colors by log10 of the value; rows and columns in first-seen order.
std::string svg_heatmap(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const Table& table, std::size_t x_col,
                        std::size_t y_col, std::size_t value_col);

struct EmitReport {
  std::vector<std::filesystem::path> files;
};

/// Writes CSVs, summary.json, SVG plots and manifest.json into `dir`.
EmitReport emit_outputs(const ScenarioResult& result, const Params& params, const RunOptions& opts,
                        const std::filesystem::path& dir, double wall_seconds);

}  // namespace qmpc
