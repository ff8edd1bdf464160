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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace qmpc {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text, EmitReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
  report.files.push_back(path);
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

}  // namespace

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const fs::path probe = dir / ".qmpc_write_probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) {
      throw std::runtime_error("output directory is not writable: " + dir.string());
    }
  }
  fs::remove(probe, ec);
}

std::string record_csv(const TrajectoryRecord& rec) {
  const Eigen::Index dim = rec.plant_dim;
  const std::size_t m = rec.controls.empty() ? 0 : static_cast<std::size_t>(rec.controls.front().size());
  std::ostringstream out;
  out << "time_ns";
  for (std::size_t j = 0; j < m; ++j) out << ",u_" << j + 1;
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) out << ",rho_re_" << i << '_' << j << ",rho_im_" << i << '_' << j;
  }
  out << ",infidelity,flags\r\n";
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    out << fmt(rec.times[k]);
    for (std::size_t j = 0; j < m; ++j) {
      out << ',';
      if (k < rec.controls.size()) out << fmt(rec.controls[k](static_cast<Eigen::Index>(j)));
    }
    for (Eigen::Index i = 0; i < rec.states[k].size(); ++i) out << ',' << fmt(rec.states[k](i));
    out << ',' << fmt(rec.infidelity[k]) << ',';
    if (k < rec.flags.size()) out << rec.flags[k];
    out << "\r\n";
  }
  return out.str();
}

std::string table_csv(const Table& table) {
  std::ostringstream out;
  for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
  out << "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << fmt(row[j]);
    out << "\r\n";
  }
  return out.str();
}

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series,
                          bool log_y) {
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  double x0 = kInfinity, x1 = -kInfinity, y0 = kInfinity, y1 = -kInfinity;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x1 > x0)) { x0 = 0.0; x1 = std::max(1.0, x1); }
  if (!(y1 > y0)) { y0 = std::isfinite(y0) ? y0 - 1.0 : 0.0; y1 = y0 + 2.0; }
  if (log_y) { y0 = std::floor(y0); y1 = std::ceil(y1); }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape_xml(title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0;
    const double yv = y0 + (y1 - y0) * t / 4.0;
    const double ypix = kTop + (1.0 - t / 4.0) * ph;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << fmt(std::round(xv * 1000) / 1000) << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << ypix + 4 << "\" text-anchor=\"end\">"
        << (log_y ? "1e" + fmt(std::round(yv * 100) / 100) : fmt(std::round(yv * 1000) / 1000))
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + ph / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      const double y = series[s].y[i];
      if (!std::isfinite(y) || (log_y && y <= 0.0)) continue;
      svg << fmt(px(series[s].x[i])) << ',' << fmt(py(y)) << ' ';
    }
    svg << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(s) + 8.0;
    svg << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 30
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kRight + 34 << "\" y=\"" << ly + 4 << "\">"
        << escape_xml(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_heatmap(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const Table& table, std::size_t x_col,
                        std::size_t y_col, std::size_t value_col) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& row : table.rows) {
    if (std::find(xs.begin(), xs.end(), row[x_col]) == xs.end()) xs.push_back(row[x_col]);
    if (std::find(ys.begin(), ys.end(), row[y_col]) == ys.end()) ys.push_back(row[y_col]);
  }
  double lo = kInfinity, hi = -kInfinity;
  for (const auto& row : table.rows) {
    const double v = std::log10(std::max(row[value_col], 1e-16));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo = std::floor(lo);
  hi = std::max(std::ceil(hi), lo + 1.0);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const double cw = pw / static_cast<double>(std::max<std::size_t>(xs.size(), 1));
  const double ch = ph / static_cast<double>(std::max<std::size_t>(ys.size(), 1));
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape_xml(title) << "</text>\n";
  for (const auto& row : table.rows) {
    const auto xi = static_cast<double>(std::find(xs.begin(), xs.end(), row[x_col]) - xs.begin());
    const auto yi = static_cast<double>(std::find(ys.begin(), ys.end(), row[y_col]) - ys.begin());
    const double t = (std::log10(std::max(row[value_col], 1e-16)) - lo) / (hi - lo);
    const int r = static_cast<int>(255 * t);
    const int b = static_cast<int>(255 * (1.0 - t));
    svg << "<rect x=\"" << fmt(kLeft + xi * cw) << "\" y=\"" << fmt(kTop + ph - (yi + 1) * ch)
        << "\" width=\"" << fmt(cw) << "\" height=\"" << fmt(ch) << "\" fill=\"rgb(" << r << ",60,"
        << b << ")\"><title>" << fmt(row[value_col]) << "</title></rect>\n";
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    svg << "<text x=\"" << fmt(kLeft + (i + 0.5) * cw) << "\" y=\"" << kTop + ph + 16
        << "\" text-anchor=\"middle\">" << fmt(xs[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < ys.size(); ++i) {
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(kTop + ph - (i + 0.5) * ch + 4)
        << "\" text-anchor=\"end\">" << fmt(ys[i]) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + ph / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  svg << "<text x=\"" << kWidth - kRight + 12 << "\" y=\"" << kTop + 10 << "\">log10 infidelity</text>\n";
  svg << "<text x=\"" << kWidth - kRight + 12 << "\" y=\"" << kTop + 28 << "\" fill=\"rgb(0,60,255)\">"
      << fmt(lo) << " (blue)</text>\n";
  svg << "<text x=\"" << kWidth - kRight + 12 << "\" y=\"" << kTop + 44 << "\" fill=\"rgb(255,60,0)\">"
      << fmt(hi) << " (red)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

EmitReport emit_outputs(const ScenarioResult& result, const Params& params, const RunOptions& opts,
                        const fs::path& dir, double wall_seconds) {
  prepare_output_dir(dir);
  EmitReport report;
  for (const auto& run : result.runs) {
    write_file(dir / (run.name + ".csv"), record_csv(run.record), report);
  }
  for (const auto& table : result.tables) {
    write_file(dir / (table.name + ".csv"), table_csv(table), report);
  }
  write_file(dir / "summary.json", result.summary.dump(2) + "\n", report);

  if (!result.runs.empty()) {
    std::vector<Series> controls;
    std::vector<Series> populations;
    std::vector<Series> infidelity;
    for (const auto& run : result.runs) {
      const auto& rec = run.record;
      for (std::size_t j = 0; !rec.controls.empty() && j < static_cast<std::size_t>(rec.controls.front().size()); ++j) {
        Series s{run.name + ":" + (j < run.control_labels.size() ? run.control_labels[j] : "u" + std::to_string(j + 1)), {}, {}};
        for (std::size_t k = 0; k < rec.controls.size(); ++k) {
          s.x.push_back(rec.times[k]);
          s.y.push_back(rec.controls[k](static_cast<Eigen::Index>(j)));
        }
        controls.push_back(std::move(s));
      }
      for (Eigen::Index j = 0; j < rec.plant_dim; ++j) {
        Series s{run.name + ":rho" + std::to_string(j) + std::to_string(j), rec.times, {}};
        const Eigen::Index idx = 2 * (j * rec.plant_dim + j);
        for (const auto& x : rec.states) s.y.push_back(x(idx));
        populations.push_back(std::move(s));
      }
      infidelity.push_back({run.name, rec.times, rec.infidelity});
    }
    write_file(dir / "controls.svg", svg_line_plot(result.scenario + " controls", "time (ns)", "u (rad/ns)", controls), report);
    write_file(dir / "populations.svg", svg_line_plot(result.scenario + " populations", "time (ns)", "population", populations), report);
    write_file(dir / "infidelity.svg", svg_line_plot(result.scenario + " infidelity", "time (ns)", "1 - F", infidelity, true), report);
  }
  for (const auto& table : result.tables) {
    if (table.name == "grid") {
      write_file(dir / "grid.svg", svg_heatmap("infidelity at evaluation time", "feedback period (steps)", "detuning (rad/ns)", table, 1, 0, 2), report);
    } else if (table.name == "drag_scale_scan") {
      Series s{"final infidelity", {}, {}};
      for (const auto& row : table.rows) { s.x.push_back(row[0]); s.y.push_back(row[1]); }
      write_file(dir / "drag_scale_scan.svg", svg_line_plot("DRAG scale scan", "scale", "1 - F", {s}, true), report);
    }
  }
  if (result.scenario == "nm_comparison") {
    std::vector<Series> curves;
    for (const auto& table : result.tables) {
      if (table.name == "mpc_curve" || table.name == "nm_model_aware" || table.name == "nm_random") {
        const std::size_t col = table.name == "mpc_curve" ? 1 : (table.name == "nm_model_aware" ? 2 : 1);
        Series s{table.name, {}, {}};
        for (const auto& row : table.rows) { s.x.push_back(row[0]); s.y.push_back(row[col]); }
        curves.push_back(std::move(s));
      }
    }
    write_file(dir / "qst_iterations.svg", svg_line_plot("infidelity vs tomography rounds", "QST iteration", "1 - F", curves, true), report);
  }

  nlohmann::ordered_json manifest;
  manifest["scenario"] = result.scenario;
  manifest["version"] = kVersion;
  manifest["seed"] = opts.seed;
  manifest["jobs"] = opts.jobs;
  manifest["config"] = params;
  std::vector<std::string> names;
  for (const auto& f : report.files) names.push_back(f.filename().string());
  names.push_back("manifest.json");
  manifest["files"] = names;
  manifest["timings"] = {{"wall_seconds", wall_seconds}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n", report);
  return report;
}

}  // namespace qmpc
