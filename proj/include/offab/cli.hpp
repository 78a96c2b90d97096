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

#ifndef OFFAB_CLI_HPP
#define OFFAB_CLI_HPP

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "offab/banditsim.hpp"
#include "offab/error.hpp"
#include "offab/logstore.hpp"
#include "offab/orchestrator.hpp"
#include "offab/policyspace.hpp"
#include "offab/report.hpp"

/**
 * \file
 * \brief The `offab` command line: simulate, evaluate, loop, report (plus space and scenario
 * helpers). Exit codes: 0 success, 1 validation or configuration error, 2 runtime failure.
 */

namespace offab::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kRuntime = 2 };

namespace detail {

inline std::atomic<bool> g_interrupted{false};

inline void on_signal(int) { g_interrupted.store(true); }

inline nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ValidationError(std::string{"cannot open "} + what + " " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline SimConfig load_sim_config(const std::string& path) {
  const auto j = read_json_file(path, "simulator config");
  try {
    return j.get<SimConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::string estimate_summary(const Estimate& e) {
  std::ostringstream out;
  out << "best=" << offab::detail::fixed(e.value) << " ci=[" << offab::detail::fixed_or_dash(e.ci_lo) << ", "
      << offab::detail::fixed_or_dash(e.ci_hi) << "]";
  return out.str();
}

/// One line per run, as printed by evaluate and loop.
inline std::string run_line(const EvaluationRun& run) {
  std::ostringstream out;
  out << "run_id=" << run.run_id << " status=" << to_string(run.status) << " window=" << run.window.count;
  if (run.search) out << " " << estimate_summary(run.search->best_estimate);
  if (run.drift) {
    out << " probe_delta=" << offab::detail::fixed(run.drift->probe_max_abs_delta)
        << (run.drift->flagged ? " DRIFT" : " stable");
  } else {
    out << " drift=n/a";
  }
  return out.str();
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::size_t records = 0;
  std::uint64_t seed = 0;
  std::optional<double> shift;
  std::optional<std::int64_t> t0;
  bool append = false;
};

inline int simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  SimConfig sim;
  try {
    sim = load_sim_config(a.config);
  } catch (const Error& e) {
    err << "simulate: " << e.what() << "\n";
    return kInvalid;
  }
  sim.seed = a.seed;
  if (a.shift) sim = shift_rewards(sim, *a.shift);

  std::int64_t t0 = a.t0.value_or(0);
  if (a.append && std::filesystem::exists(a.out)) {
    LogDataset existing(sim.dimension(), sim.num_actions());
    try {
      existing = ingest(a.out);
    } catch (const Error& e) {
      err << "simulate: cannot append: " << e.what() << "\n";
      return kInvalid;
    }
    if (existing.dimension() != sim.dimension() || existing.num_actions() != sim.num_actions()) {
      err << "simulate: " << a.out << " header does not match the simulator (d, K)\n";
      return kInvalid;
    }
    if (!a.t0 && !existing.empty()) t0 = existing.records().back().timestamp + 1;
    const auto logs = generate_logs(sim, a.records, t0);
    std::ofstream f(a.out, std::ios::binary | std::ios::app);
    if (!f) {
      err << "simulate: cannot open " << a.out << " for appending\n";
      return kRuntime;
    }
    write_records(f, logs.records());
    if (!f) {
      err << "simulate: write failed: " << a.out << "\n";
      return kRuntime;
    }
  } else {
    try {
      write_dataset(a.out, generate_logs(sim, a.records, t0));
    } catch (const IoError& e) {
      err << "simulate: " << e.what() << "\n";
      return kRuntime;
    }
  }
  out << "records " << a.records << "\n";
  out << "logging_policy_value " << format_double(true_value(sim, sim.logging_policy)) << "\n";
  return kOk;
}

struct EvaluateArgs {
  std::string logs;
  std::string config;
  std::string store;
};

inline int evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<LogDataset> logs;
  std::optional<ProgramConfig> config;
  try {
    logs = ingest(a.logs);
    config = load_program_config(a.config);
  } catch (const Error& e) {
    err << "evaluate: " << e.what() << "\n";
    return kInvalid;
  }
  try {
    ResultsStore store(a.store);
    const auto run = run_once(*config, store, *logs);
    out << run_line(run) << "\n";
    if (run.status == RunStatus::ok || run.status == RunStatus::empty_window) return kOk;
    err << "evaluate: run " << run.run_id << " " << to_string(run.status) << ": " << run.message << "\n";
    return kRuntime;
  } catch (const ValidationError& e) {
    err << "evaluate: " << e.what() << "\n";
    return kInvalid;
  } catch (const Error& e) {
    err << "evaluate: " << e.what() << "\n";
    return kRuntime;
  }
}

struct LoopArgs {
  std::string logs;
  std::string config;
  std::string store;
  std::size_t max_runs = 1;
  std::int64_t poll_millis = 500;
};

inline int loop(const LoopArgs& a, std::ostream& out, std::ostream& err, std::stop_token stop = {}) {
  std::optional<ProgramConfig> config;
  try {
    config = load_program_config(a.config);
  } catch (const Error& e) {
    err << "loop: " << e.what() << "\n";
    return kInvalid;
  }
  try {
    ResultsStore store(a.store);
    LoopOptions options;
    options.max_runs = a.max_runs;
    options.poll_interval = std::chrono::milliseconds(a.poll_millis);
    options.stop = stop;
    options.on_run = [&](const EvaluationRun& run) { out << run_line(run) << std::endl; };
    options.on_diagnostic = [&](const std::string& msg) { err << "loop: " << msg << "\n"; };
    const auto runs = run_loop(*config, store, a.logs, options);
    if (runs.size() < a.max_runs) err << "loop: stopped after " << runs.size() << " runs\n";
    return kOk;
  } catch (const ValidationError& e) {
    err << "loop: " << e.what() << "\n";
    return kInvalid;
  } catch (const Error& e) {
    err << "loop: " << e.what() << "\n";
    return kRuntime;
  }
}

struct ReportArgs {
  std::string store;
  std::string format = "markdown";
  std::optional<std::string> out;
};

inline int report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto format = report_format_from_string(a.format);
    if (!std::filesystem::is_directory(a.store)) {
      err << "report: store directory " << a.store << " does not exist\n";
      return kInvalid;
    }
    const auto text = offab::report(ResultsStore(a.store, false), format);
    if (a.out) {
      std::ofstream f(*a.out, std::ios::binary | std::ios::trunc);
      f << text;
      if (!f) {
        err << "report: cannot write " << *a.out << "\n";
        return kRuntime;
      }
    } else {
      out << text;
    }
    return kOk;
  } catch (const ValidationError& e) {
    err << "report: " << e.what() << "\n";
    return kInvalid;
  } catch (const Error& e) {
    err << "report: " << e.what() << "\n";
    return kRuntime;
  }
}

inline int write_text(const std::optional<std::string>& path, const std::string& text, std::ostream& out,
                      std::ostream& err) {
  if (!path) {
    out << text;
    return kOk;
  }
  std::ofstream f(*path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) {
    err << "cannot write " << *path << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace detail

/// Runs the command line `args` (args[0] is the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               std::stop_token stop = {}) {
  CLI::App app{"Automated offline A/B testing: periodic off-policy evaluation with genetic search", "offab"};
  app.require_subcommand(1);

  detail::SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate logged bandit feedback from a simulator config");
  simulate->add_option("--config", sim_args.config, "Simulator config (JSON)")->required();
  simulate->add_option("--out", sim_args.out, "Output log file (JSON Lines)")->required();
  simulate->add_option("--records", sim_args.records, "Number of records")->required();
  simulate->add_option("--seed", sim_args.seed, "Generator seed")->required();
  simulate->add_option("--shift", sim_args.shift, "Add delta to every reward mean (clamped to [0, 1])");
  simulate->add_option("--t0", sim_args.t0, "First timestamp (default 0, or last+1 with --append)");
  simulate->add_flag("--append", sim_args.append, "Append records to an existing log file");

  detail::EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Run one evaluation and persist it to the store");
  evaluate->add_option("--logs", eval_args.logs, "Log file")->required();
  evaluate->add_option("--config", eval_args.config, "Program config (JSON)")->required();
  evaluate->add_option("--store", eval_args.store, "Results store directory")->required();

  detail::LoopArgs loop_args;
  auto* loop = app.add_subcommand("loop", "Poll a growing log file and evaluate whenever the trigger fires");
  loop->add_option("--logs", loop_args.logs, "Log file")->required();
  loop->add_option("--config", loop_args.config, "Program config (JSON)")->required();
  loop->add_option("--store", loop_args.store, "Results store directory")->required();
  loop->add_option("--max-runs", loop_args.max_runs, "Stop after this many runs")->required()->check(CLI::PositiveNumber);
  loop->add_option("--poll-millis", loop_args.poll_millis, "Polling interval in milliseconds")->check(CLI::PositiveNumber);

  detail::ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Summarize the runs in a results store");
  report->add_option("--store", report_args.store, "Results store directory")->required();
  report->add_option("--format", report_args.format, "json or markdown")->check(CLI::IsMember({"json", "markdown"}));
  report->add_option("--out", report_args.out, "Write to this file instead of stdout");

  std::size_t space_d = 4;
  std::size_t space_k = 3;
  std::optional<std::string> space_out;
  auto* space = app.add_subcommand("space", "Print the builtin hyperparameter space");
  space->add_option("--d", space_d, "Context dimension");
  space->add_option("--K", space_k, "Action count");
  space->add_option("--out", space_out, "Output file");

  std::uint64_t scenario_seed = 0;
  double scenario_floor = 0.1;
  std::optional<std::string> scenario_out;
  auto* scenario = app.add_subcommand("scenario", "Write the default desk-scale simulator config");
  scenario->add_option("--seed", scenario_seed, "Scenario seed");
  scenario->add_option("--logging-floor", scenario_floor, "Exploration floor of the logging policy");
  scenario->add_option("--out", scenario_out, "Output file");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kInvalid;
  }

  if (*simulate) return detail::simulate(sim_args, out, err);
  if (*evaluate) return detail::evaluate(eval_args, out, err);
  if (*loop) return detail::loop(loop_args, out, err, stop);
  if (*report) return detail::report(report_args, out, err);
  try {
    if (*space) return detail::write_text(space_out, to_json(builtin_space(space_d, space_k)).dump(2) + "\n", out, err);
    if (*scenario) {
      return detail::write_text(scenario_out, nlohmann::json(default_scenario(scenario_seed, scenario_floor)).dump(2) + "\n",
                                out, err);
    }
  } catch (const ValidationError& e) {
    err << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}

/// Process entry point: installs SIGINT/SIGTERM handlers that stop a running loop cleanly.
inline int main(int argc, char** argv) {
  std::signal(SIGINT, detail::on_signal);
  std::signal(SIGTERM, detail::on_signal);
  std::stop_source source;
  std::jthread watcher([&source](std::stop_token self) {
    while (!self.stop_requested()) {
      if (detail::g_interrupted.load()) {
        source.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr, source.get_token());
}

}  // namespace offab::cli

#endif  // OFFAB_CLI_HPP
