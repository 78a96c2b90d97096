// Copyright 2026 The offab Authors
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

#ifndef OFFAB_REPORT_HPP
#define OFFAB_REPORT_HPP

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/orchestrator.hpp"

/**
 * \file
 * \brief Human- and machine-readable summaries of a results store.
 *
 * Both formats are pure functions of the stored runs. Wall-clock fields are left out so that two
 * stores holding the same evaluations render identically.
 */

namespace offab {

enum class ReportFormat { json, markdown };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw ValidationError("unknown report format \"" + s + "\" (expected json or markdown)");
}

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fixed_or_dash(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

inline std::string probe_cell(const ProbeResult& p) { return p.estimate ? fixed(p.estimate->value) : "-"; }

inline std::string window_cell(const WindowDigest& w) {
  std::string out = std::to_string(w.count);
  if (w.t_min && w.t_max) out += " [" + std::to_string(*w.t_min) + ", " + std::to_string(*w.t_max) + "]";
  return out + " `" + w.content_hash + "`";
}

}  // namespace detail

inline nlohmann::json report_json(const std::vector<EvaluationRun>& runs) {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json trend = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json row{{"run_id", r.run_id}, {"status", to_string(r.status)}, {"window", r.window}};
    if (!r.message.empty()) row["message"] = r.message;
    if (r.search) {
      row["best_variant"] = r.search->best_variant;
      row["best_estimate"] = r.search->best_estimate;
    } else {
      row["best_variant"] = nullptr;
      row["best_estimate"] = nullptr;
    }
    row["drift"] = r.drift ? nlohmann::json(*r.drift) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));

    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : r.probes) {
      probes.push_back(p.estimate ? nlohmann::json(p.estimate->value) : nlohmann::json(nullptr));
    }
    trend.push_back({{"run_id", r.run_id},
                     {"best", r.search ? nlohmann::json(r.search->best_estimate.value) : nlohmann::json(nullptr)},
                     {"probes", probes}});
  }
  return nlohmann::json{{"run_count", runs.size()}, {"runs", rows}, {"trend", trend}};
}

inline std::string report_markdown(const std::vector<EvaluationRun>& runs) {
  std::ostringstream out;
  out << "# Offline evaluation report\n\n";
  out << runs.size() << (runs.size() == 1 ? " run" : " runs") << "\n";
  if (runs.empty()) return out.str();

  out << "\n## Runs\n\n";
  out << "| run | status | window | best | ci | ess | capped | drift |\n";
  out << "|---:|---|---|---:|---|---:|---:|---|\n";
  for (const auto& r : runs) {
    out << "| " << r.run_id << " | " << to_string(r.status) << " | " << detail::window_cell(r.window) << " | ";
    if (r.search) {
      const auto& e = r.search->best_estimate;
      out << detail::fixed(e.value) << " | [" << detail::fixed_or_dash(e.ci_lo) << ", "
          << detail::fixed_or_dash(e.ci_hi) << "] | " << detail::fixed(e.ess, 1) << " | "
          << detail::fixed(e.capped_fraction, 4) << " | ";
    } else {
      out << "- | - | - | - | ";
    }
    if (r.drift) {
      out << (r.drift->flagged ? "**DRIFT**" : "stable");
    } else {
      out << "-";
    }
    out << " |\n";
  }

  for (const auto& r : runs) {
    out << "\n### Run " << r.run_id << "\n\n";
    if (!r.message.empty()) out << "- note: " << r.message << "\n";
    if (r.search) {
      out << "- best variant `" << r.search->best_variant.id << "`:";
      for (const auto& [name, value] : r.search->best_variant.assignments) out << " " << name << "=" << render(value);
      out << "\n";
      out << "- search: " << r.search->evaluations << " evaluations, " << r.search->failed_evaluations
          << " failed\n";
    }
    if (r.drift) {
      const auto& d = *r.drift;
      out << "- drift: best_delta=" << detail::fixed(d.best_delta) << " ci_disjoint=" << (d.ci_disjoint ? "yes" : "no")
          << " probe_max_abs_delta=" << detail::fixed(d.probe_max_abs_delta) << " threshold="
          << detail::fixed(d.threshold, 4) << (d.flagged ? " DRIFT" : "") << "\n";
    } else {
      out << "- drift: n/a\n";
    }
  }

  std::size_t probe_columns = 0;
  for (const auto& r : runs) probe_columns = std::max(probe_columns, r.probes.size());
  out << "\n## Trend\n\n| run | best |";
  for (std::size_t i = 0; i < probe_columns; ++i) out << " p" << i + 1 << " |";
  out << "\n|---:|---:|";
  for (std::size_t i = 0; i < probe_columns; ++i) out << "---:|";
  out << "\n";
  for (const auto& r : runs) {
    out << "| " << r.run_id << " | " << (r.search ? detail::fixed(r.search->best_estimate.value) : "-") << " |";
    for (std::size_t i = 0; i < probe_columns; ++i) {
      out << " " << (i < r.probes.size() ? detail::probe_cell(r.probes[i]) : "-") << " |";
    }
    out << "\n";
  }
  return out.str();
}

/// Renders every run in `store`, ordered by run id. Never writes to the store.
inline std::string report(const ResultsStore& store, ReportFormat format) {
  const auto runs = store.load_all();
  if (format == ReportFormat::json) return report_json(runs).dump(2) + "\n";
  return report_markdown(runs);
}

}  // namespace offab

#endif  // OFFAB_REPORT_HPP
