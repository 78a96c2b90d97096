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

#ifndef OFFAB_ORCHESTRATOR_HPP
#define OFFAB_ORCHESTRATOR_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <regex>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/estimators.hpp"
#include "offab/gasearch.hpp"
#include "offab/logstore.hpp"
#include "offab/policyspace.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Periodic evaluation runs: window selection, probe re-evaluation, GA search, drift
 * detection, and the append-only results store.
 */

namespace offab {

enum class TriggerKind { every_n_records, every_t_millis };

struct TriggerPolicy {
  TriggerKind kind = TriggerKind::every_n_records;
  std::size_t records = 1000;  ///< every_n_records
  std::int64_t millis = 60000; ///< every_t_millis

  friend bool operator==(const TriggerPolicy&, const TriggerPolicy&) = default;
};

/// The evaluated program: policy space, measurement, search, data selection and monitoring knobs.
struct ProgramConfig {
  HyperparameterSpace space = builtin_space(4, 3);
  EstimatorConfig estimator;
  GAConfig ga;
  WindowSpec window;
  TriggerPolicy trigger;
  std::size_t probe_count = 12;
  std::uint64_t probe_seed = 0;
  double drift_threshold = 0.05;

  void validate() const {
    estimator.validate();
    ga.validate();
    window.validate();
    if (probe_count > 10000) throw ValidationError("probe_count must be <= 10000");
    if (trigger.kind == TriggerKind::every_n_records && trigger.records < 1) {
      throw ValidationError("trigger: records must be >= 1");
    }
    if (trigger.kind == TriggerKind::every_t_millis && trigger.millis < 1) {
      throw ValidationError("trigger: millis must be >= 1");
    }
    if (!(drift_threshold >= 0.0)) throw ValidationError("drift_threshold must be >= 0");
    (void)detail::layout_of(space);
  }
};

enum class RunStatus { ok, empty_window, degenerate, aborted };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::empty_window: return "empty_window";
    case RunStatus::degenerate: return "degenerate";
    case RunStatus::aborted: return "aborted";
  }
  return "?";
}

inline RunStatus run_status_from_string(const std::string& s) {
  if (s == "ok") return RunStatus::ok;
  if (s == "empty_window") return RunStatus::empty_window;
  if (s == "degenerate") return RunStatus::degenerate;
  if (s == "aborted") return RunStatus::aborted;
  throw ValidationError("unknown run status \"" + s + "\"");
}

/// A variant with its hyperparameter names attached, as persisted in run files.
struct NamedVariant {
  std::string id;
  std::vector<std::pair<std::string, Value>> assignments;

  friend bool operator==(const NamedVariant&, const NamedVariant&) = default;
};

inline NamedVariant name_variant(const HyperparameterSpace& space, const Variant& v) {
  NamedVariant out{v.id, {}};
  for (std::size_t i = 0; i < v.assignments.size(); ++i) out.assignments.emplace_back(space[i].name, v.assignments[i]);
  return out;
}

struct RunSearch {
  NamedVariant best_variant;
  Estimate best_estimate;
  std::vector<GenerationStats> history;
  std::size_t evaluations = 0;
  std::size_t failed_evaluations = 0;

  friend bool operator==(const RunSearch&, const RunSearch&) = default;
};

struct ProbeResult {
  std::string variant_id;
  std::optional<Estimate> estimate;  ///< Absent when the estimator failed on this window.

  friend bool operator==(const ProbeResult&, const ProbeResult&) = default;
};

struct DriftReport {
  double best_delta = 0.0;
  bool ci_disjoint = false;
  double probe_max_abs_delta = 0.0;
  double threshold = 0.05;
  bool flagged = false;

  friend bool operator==(const DriftReport&, const DriftReport&) = default;
};

/// One periodic evaluation e_k.
struct EvaluationRun {
  std::size_t run_id = 0;
  std::int64_t started_at = 0;   ///< wall clock, ms
  std::int64_t finished_at = 0;  ///< wall clock, ms
  RunStatus status = RunStatus::ok;
  std::string message;
  std::size_t log_records = 0;  ///< Size of the log the window was selected from.
  WindowSpec window_spec;
  WindowDigest window;
  std::optional<RunSearch> search;
  std::vector<ProbeResult> probes;
  std::optional<DriftReport> drift;

  friend bool operator==(const EvaluationRun&, const EvaluationRun&) = default;
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const TriggerPolicy& t) {
  if (t.kind == TriggerKind::every_n_records) {
    j = nlohmann::json{{"kind", "every_n_records"}, {"records", t.records}};
  } else {
    j = nlohmann::json{{"kind", "every_t_millis"}, {"millis", t.millis}};
  }
}

inline void from_json(const nlohmann::json& j, TriggerPolicy& t) {
  t = TriggerPolicy{};
  const auto kind = j.value("kind", std::string{"every_n_records"});
  if (kind == "every_n_records") {
    t.records = j.value("records", t.records);
  } else if (kind == "every_t_millis") {
    t.kind = TriggerKind::every_t_millis;
    t.millis = j.value("millis", t.millis);
  } else {
    throw ValidationError("unknown trigger kind \"" + kind + "\"");
  }
}

inline nlohmann::json to_json(const ProgramConfig& c) {
  nlohmann::json j;
  j["space"] = to_json(c.space);
  j["estimator"] = c.estimator;
  j["ga"] = c.ga;
  j["window"] = c.window;
  j["trigger"] = c.trigger;
  j["probe_count"] = c.probe_count;
  j["probe_seed"] = c.probe_seed;
  j["drift_threshold"] = c.drift_threshold;
  return j;
}

/// Missing blocks take their defaults; "space" may be {"builtin": {"d": .., "K": ..}} or {"specs": [...]}.
inline ProgramConfig program_config_from_json(const nlohmann::json& j) {
  ProgramConfig c;
  try {
    if (j.contains("space")) c.space = space_from_json(j.at("space"));
    if (j.contains("estimator")) c.estimator = j.at("estimator").get<EstimatorConfig>();
    if (j.contains("ga")) c.ga = j.at("ga").get<GAConfig>();
    if (j.contains("window")) c.window = j.at("window").get<WindowSpec>();
    if (j.contains("trigger")) c.trigger = j.at("trigger").get<TriggerPolicy>();
    c.probe_count = j.value("probe_count", c.probe_count);
    c.probe_seed = j.value("probe_seed", c.probe_seed);
    c.drift_threshold = j.value("drift_threshold", c.drift_threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string{"program config: "} + e.what());
  }
  c.validate();
  return c;
}

inline ProgramConfig load_program_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open program config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return program_config_from_json(j);
}

inline void to_json(nlohmann::json& j, const NamedVariant& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [name, value] : v.assignments) a.push_back({{"name", name}, {"value", value_to_json(value)}});
  j = nlohmann::json{{"id", v.id}, {"assignments", a}};
}

inline void from_json(const nlohmann::json& j, NamedVariant& v) {
  v.id = j.at("id").get<std::string>();
  v.assignments.clear();
  for (const auto& a : j.at("assignments")) {
    const auto& x = a.at("value");
    Value value;
    if (x.is_string()) {
      value = x.get<std::string>();
    } else if (x.is_number_integer()) {
      value = x.get<std::int64_t>();
    } else {
      value = x.get<double>();
    }
    v.assignments.emplace_back(a.at("name").get<std::string>(), std::move(value));
  }
}

inline void to_json(nlohmann::json& j, const RunSearch& s) {
  j = nlohmann::json{{"best_variant", s.best_variant},
                     {"best_estimate", s.best_estimate},
                     {"history", s.history},
                     {"evaluations", s.evaluations},
                     {"failed_evaluations", s.failed_evaluations}};
}

inline void from_json(const nlohmann::json& j, RunSearch& s) {
  s.best_variant = j.at("best_variant").get<NamedVariant>();
  s.best_estimate = j.at("best_estimate").get<Estimate>();
  s.history = j.at("history").get<std::vector<GenerationStats>>();
  s.evaluations = j.at("evaluations").get<std::size_t>();
  s.failed_evaluations = j.value("failed_evaluations", std::size_t{0});
}

inline void to_json(nlohmann::json& j, const ProbeResult& p) {
  j = nlohmann::json{{"variant_id", p.variant_id}};
  j["estimate"] = p.estimate ? nlohmann::json(*p.estimate) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ProbeResult& p) {
  p.variant_id = j.at("variant_id").get<std::string>();
  p.estimate = j.at("estimate").is_null() ? std::nullopt : std::optional<Estimate>(j.at("estimate").get<Estimate>());
}

inline void to_json(nlohmann::json& j, const DriftReport& d) {
  j = nlohmann::json{{"best_delta", d.best_delta},
                     {"ci_disjoint", d.ci_disjoint},
                     {"probe_max_abs_delta", d.probe_max_abs_delta},
                     {"threshold", d.threshold},
                     {"flagged", d.flagged}};
}

inline void from_json(const nlohmann::json& j, DriftReport& d) {
  d.best_delta = j.at("best_delta").get<double>();
  d.ci_disjoint = j.at("ci_disjoint").get<bool>();
  d.probe_max_abs_delta = j.at("probe_max_abs_delta").get<double>();
  d.threshold = j.value("threshold", 0.05);
  d.flagged = j.at("flagged").get<bool>();
}

inline void to_json(nlohmann::json& j, const EvaluationRun& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"status", to_string(r.status)},
                     {"message", r.message},
                     {"started_at", r.started_at},
                     {"finished_at", r.finished_at},
                     {"log_records", r.log_records},
                     {"window_spec", r.window_spec},
                     {"window", r.window},
                     {"probes", r.probes}};
  j["search"] = r.search ? nlohmann::json(*r.search) : nlohmann::json(nullptr);
  j["drift"] = r.drift ? nlohmann::json(*r.drift) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, EvaluationRun& r) {
  r.run_id = j.at("run_id").get<std::size_t>();
  r.status = run_status_from_string(j.at("status").get<std::string>());
  r.message = j.value("message", std::string{});
  r.started_at = j.at("started_at").get<std::int64_t>();
  r.finished_at = j.at("finished_at").get<std::int64_t>();
  r.log_records = j.value("log_records", std::size_t{0});
  r.window_spec = j.at("window_spec").get<WindowSpec>();
  r.window = j.at("window").get<WindowDigest>();
  r.probes = j.at("probes").get<std::vector<ProbeResult>>();
  r.search = j.at("search").is_null() ? std::nullopt : std::optional<RunSearch>(j.at("search").get<RunSearch>());
  r.drift = j.at("drift").is_null() ? std::nullopt : std::optional<DriftReport>(j.at("drift").get<DriftReport>());
}

// ---------------------------------------------------------------------------
// Results store

/**
 * Directory of `run-<k>.json` files plus a `latest` file holding the newest k. Files are written
 * to a temporary name and renamed into place, so a crash never leaves a partial run file behind.
 */
class ResultsStore {
 public:
  /// Opens `dir`; with `create`, a missing directory is created.
  explicit ResultsStore(std::filesystem::path dir, bool create = true) : dir_(std::move(dir)) {
    std::error_code ec;
    if (std::filesystem::is_directory(dir_, ec)) return;
    if (!create) throw IoError("results store " + dir_.string() + " does not exist");
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create results store " + dir_.string() + ": " + ec.message());
  }

  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

  [[nodiscard]] static std::string file_name(std::size_t run_id) { return "run-" + std::to_string(run_id) + ".json"; }

  /// Run ids present in the store, ascending.
  [[nodiscard]] std::vector<std::size_t> run_ids() const {
    static const std::regex pattern(R"(run-([0-9]+)\.json)");
    std::vector<std::size_t> ids;
    std::error_code ec;
    std::filesystem::directory_iterator it(dir_, ec);
    if (ec) throw IoError("cannot list results store " + dir_.string() + ": " + ec.message());
    for (const auto& entry : it) {
      std::smatch m;
      const auto name = entry.path().filename().string();
      if (std::regex_match(name, m, pattern)) ids.push_back(std::stoull(m[1].str()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  [[nodiscard]] std::size_t next_run_id() const {
    const auto ids = run_ids();
    return ids.empty() ? 1 : ids.back() + 1;
  }

  [[nodiscard]] EvaluationRun load(std::size_t run_id) const {
    const auto path = dir_ / file_name(run_id);
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
      return nlohmann::json::parse(in).get<EvaluationRun>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }

  [[nodiscard]] std::vector<EvaluationRun> load_all() const {
    std::vector<EvaluationRun> runs;
    for (const auto id : run_ids()) runs.push_back(load(id));
    return runs;
  }

  /// Most recent run with status ok.
  [[nodiscard]] std::optional<EvaluationRun> latest_ok() const {
    const auto ids = run_ids();
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
      auto run = load(*it);
      if (run.status == RunStatus::ok) return run;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<EvaluationRun> latest() const {
    const auto ids = run_ids();
    if (ids.empty()) return std::nullopt;
    return load(ids.back());
  }

  void append(const EvaluationRun& run) const {
    if (std::filesystem::exists(dir_ / file_name(run.run_id))) {
      throw IoError("run " + std::to_string(run.run_id) + " already exists in " + dir_.string());
    }
    write_atomically(file_name(run.run_id), nlohmann::json(run).dump(2) + "\n");
    write_atomically("latest", std::to_string(run.run_id) + "\n");
  }

 private:
  void write_atomically(const std::string& name, const std::string& content) const {
    const auto target = dir_ / name;
    const auto tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << content;
      out.flush();
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " + ec.message());
  }

  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Runs

/// The fixed probe set; depends only on (space, probe_seed, probe_count).
inline std::vector<Variant> probe_variants(const ProgramConfig& config) {
  std::vector<Variant> probes;
  probes.reserve(config.probe_count);
  for (std::size_t i = 0; i < config.probe_count; ++i) {
    Rng rng(derive_seed(config.probe_seed, 0x9120BE5ULL, i));
    probes.push_back(random_variant(config.space, rng));
  }
  return probes;
}

/// Compares `current` against the previous ok run. Both must carry a search result.
inline DriftReport compute_drift(const EvaluationRun& current, const EvaluationRun& previous, double threshold) {
  DriftReport d;
  d.threshold = threshold;
  const auto& cur = current.search->best_estimate;
  const auto& prev = previous.search->best_estimate;
  d.best_delta = cur.value - prev.value;
  if (cur.ci_lo && cur.ci_hi && prev.ci_lo && prev.ci_hi) {
    d.ci_disjoint = *cur.ci_lo > *prev.ci_hi || *cur.ci_hi < *prev.ci_lo;
  }
  const std::size_t m = std::min(current.probes.size(), previous.probes.size());
  for (std::size_t i = 0; i < m; ++i) {
    const auto& a = current.probes[i];
    const auto& b = previous.probes[i];
    if (a.variant_id != b.variant_id || !a.estimate || !b.estimate) continue;
    d.probe_max_abs_delta = std::max(d.probe_max_abs_delta, std::abs(a.estimate->value - b.estimate->value));
  }
  d.flagged = d.ci_disjoint || d.probe_max_abs_delta > threshold;
  return d;
}

inline std::int64_t wall_clock_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/**
 * One evaluation e_k over the log `logs`: select the window, re-estimate the probes, search the
 * space with the GA, compare against the latest ok run and append the result to `store`.
 *
 * Throws ValidationError if the config does not fit the log, IoError if the store cannot be
 * written (after trying to persist an `aborted` record).
 */
inline EvaluationRun run_once(const ProgramConfig& config, const ResultsStore& store, const LogDataset& logs) {
  config.validate();
  const auto layout = detail::layout_of(config.space);
  if (layout.num_actions != logs.num_actions() || layout.dimension != logs.dimension()) {
    throw ValidationError("space policy shape (K=" + std::to_string(layout.num_actions) + ", d=" +
                          std::to_string(layout.dimension) + ") does not match the log (K=" +
                          std::to_string(logs.num_actions()) + ", d=" + std::to_string(logs.dimension()) + ")");
  }

  EvaluationRun run;
  run.run_id = store.next_run_id();
  run.started_at = wall_clock_millis();
  run.log_records = logs.size();
  run.window_spec = config.window;
  const auto window = select_window(logs, config.window);
  run.window = digest(window);

  auto persist = [&] {
    run.finished_at = wall_clock_millis();
    try {
      store.append(run);
    } catch (const IoError&) {
      run.status = RunStatus::aborted;
      run.message = "results store write failed";
      try {
        store.append(run);
      } catch (const IoError&) {
      }
      throw;
    }
    return run;
  };

  if (window.empty()) {
    run.status = RunStatus::empty_window;
    run.message = "window selected zero records";
    return persist();
  }

  EstimatorConfig point = config.estimator;
  point.bootstrap_resamples = 0;

  for (const auto& probe : probe_variants(config)) {
    ProbeResult p{probe.id, std::nullopt};
    try {
      p.estimate = estimate(decode(config.space, probe), window, point);
    } catch (const EstimationError&) {
    }
    run.probes.push_back(std::move(p));
  }

  try {
    auto result = evolve(
        config.space, [&](const Variant& v) { return estimate(decode(config.space, v), window, point); }, config.ga);
    RunSearch search;
    search.best_variant = name_variant(config.space, result.best_variant);
    search.best_estimate = estimate(decode(config.space, result.best_variant), window, config.estimator);
    search.history = std::move(result.history);
    search.evaluations = result.evaluations;
    search.failed_evaluations = result.failed_evaluations;
    run.search = std::move(search);
  } catch (const SearchAborted& e) {
    run.status = RunStatus::degenerate;
    run.message = e.what();
    return persist();
  }

  run.status = RunStatus::ok;
  if (auto previous = store.latest_ok(); previous && previous->search) {
    run.drift = compute_drift(run, *previous, config.drift_threshold);
  }
  return persist();
}

struct LoopOptions {
  std::size_t max_runs = 1;
  std::chrono::milliseconds poll_interval{500};
  std::size_t max_consecutive_store_failures = 3;
  std::stop_token stop;
  std::function<void(const EvaluationRun&)> on_run;       ///< Called after each persisted run.
  std::function<void(const std::string&)> on_diagnostic;  ///< Recoverable problems.
};

/**
 * Polls `log_path` and triggers run_once according to `config.trigger` until `max_runs` runs
 * completed or `stop` is requested.
 *
 * With every_n_records, each run evaluates the log as it stood when the N-th new record arrived, so
 * a log file that already holds several batches is replayed batch by batch. The consumed record
 * count resumes from the newest run in the store.
 */
inline std::vector<EvaluationRun> run_loop(const ProgramConfig& config, const ResultsStore& store,
                                           const std::string& log_path, const LoopOptions& options) {
  config.validate();
  auto diagnose = [&](const std::string& msg) {
    if (options.on_diagnostic) options.on_diagnostic(msg);
  };

  std::vector<EvaluationRun> runs;
  std::size_t cursor = 0;
  if (auto last = store.latest()) cursor = last->log_records;
  auto last_fire = std::chrono::steady_clock::now();
  std::size_t store_failures = 0;

  auto trigger = [&](const LogDataset& logs) {
    try {
      auto run = run_once(config, store, logs);
      store_failures = 0;
      if (options.on_run) options.on_run(run);
      runs.push_back(std::move(run));
    } catch (const IoError& e) {
      diagnose(std::string{"run failed: "} + e.what());
      if (++store_failures >= options.max_consecutive_store_failures) throw;
    }
  };

  while (runs.size() < options.max_runs && !options.stop.stop_requested()) {
    std::optional<LogDataset> logs;
    try {
      logs = ingest(log_path);
    } catch (const Error& e) {
      diagnose(std::string{"log not readable, retrying: "} + e.what());
    }
    if (logs) {
      if (config.trigger.kind == TriggerKind::every_n_records) {
        while (runs.size() < options.max_runs && logs->size() - std::min(cursor, logs->size()) >= config.trigger.records &&
               !options.stop.stop_requested()) {
          cursor += config.trigger.records;
          trigger(prefix(*logs, cursor));
        }
      } else {
        const auto now = std::chrono::steady_clock::now();
        if (now - last_fire >= std::chrono::milliseconds(config.trigger.millis) && logs->size() > cursor) {
          last_fire = now;
          cursor = logs->size();
          trigger(*logs);
        }
      }
    }
    if (runs.size() >= options.max_runs) break;
    const auto wake = std::chrono::steady_clock::now() + options.poll_interval;
    while (std::chrono::steady_clock::now() < wake && !options.stop.stop_requested()) {
      std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
          std::chrono::milliseconds(20), wake - std::chrono::steady_clock::now()));
    }
  }
  return runs;
}

}  // namespace offab

#endif  // OFFAB_ORCHESTRATOR_HPP
