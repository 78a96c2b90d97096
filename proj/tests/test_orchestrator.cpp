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

#include <catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "offab/banditsim.hpp"
#include "offab/orchestrator.hpp"
#include "test_util.hpp"

using offab::EvaluationRun;
using offab::ProgramConfig;
using offab::ResultsStore;
using offab::RunStatus;
using offab::WindowSpec;
using offab::testing::small_program;
using offab::testing::TempDir;

namespace {

const offab::SimConfig& scenario() {
  static const auto cfg = offab::default_scenario(2024);
  return cfg;
}

offab::Estimate point(double v) {
  offab::Estimate e;
  e.value = v;
  return e;
}

}  // namespace

TEST_CASE("first run persists an ok run without drift") {
  TempDir dir;
  const ResultsStore store(dir.path() / "store");
  const auto logs = offab::generate_logs(scenario(), 5000);
  const auto run = offab::run_once(small_program(), store, logs);
  CHECK(run.status == RunStatus::ok);
  CHECK(run.run_id == 1);
  CHECK_FALSE(run.drift.has_value());
  REQUIRE(run.search.has_value());
  CHECK(run.search->history.size() == 3);
  CHECK(run.search->best_estimate.ci_lo.has_value());
  CHECK(run.probes.size() == 4);
  CHECK(run.window.count == 1000);
  CHECK(run.window.t_min == 4000);
  CHECK(run.log_records == 5000);
  CHECK(std::filesystem::exists(store.dir() / "run-1.json"));
  CHECK(offab::testing::read_file((store.dir() / "latest").string()) == "1\n");
  CHECK(store.load(1) == run);
}

TEST_CASE("identical consecutive runs show zero drift") {
  TempDir dir;
  const ResultsStore store(dir.path());
  const auto logs = offab::generate_logs(scenario(), 1000);
  const auto first = offab::run_once(small_program(), store, logs);
  const auto second = offab::run_once(small_program(), store, logs);
  CHECK(second.run_id == 2);
  REQUIRE(second.drift.has_value());
  CHECK(second.drift->probe_max_abs_delta == 0.0);
  CHECK(second.drift->best_delta == 0.0);
  CHECK_FALSE(second.drift->ci_disjoint);
  CHECK_FALSE(second.drift->flagged);
  CHECK(second.probes == first.probes);
}

TEST_CASE("empty windows are persisted and skipped by drift") {
  TempDir dir;
  const ResultsStore store(dir.path());
  const auto logs = offab::generate_logs(scenario(), 1000);
  auto program = small_program();
  (void)offab::run_once(program, store, logs);

  auto empty_program = program;
  empty_program.window = WindowSpec::range(50000, 60000);
  const auto empty = offab::run_once(empty_program, store, logs);
  CHECK(empty.status == RunStatus::empty_window);
  CHECK(empty.run_id == 2);
  CHECK_FALSE(empty.search.has_value());
  CHECK(empty.probes.empty());
  CHECK(empty.window.count == 0);
  CHECK(std::filesystem::exists(store.dir() / "run-2.json"));

  const auto third = offab::run_once(program, store, logs);
  REQUIRE(third.drift.has_value());
  CHECK(third.drift->probe_max_abs_delta == 0.0);  // compared with run 1, not run 2
}

TEST_CASE("a population that never evaluates is degenerate") {
  TempDir dir;
  const ResultsStore store(dir.path());
  auto program = small_program();
  program.space = offab::testing::underflow_space(4.0, 5.0, -5.0, -4.0);
  program.estimator.kind = offab::EstimatorKind::ncis;
  const auto run = offab::run_once(program, store, offab::testing::always_action_one(200));
  CHECK(run.status == RunStatus::degenerate);
  CHECK_FALSE(run.search.has_value());
  CHECK(store.load(1).status == RunStatus::degenerate);
}

TEST_CASE("degenerate individuals do not fail the run") {
  TempDir dir;
  const ResultsStore store(dir.path());
  auto program = small_program();
  program.space = offab::testing::underflow_space(-5.0, 5.0, -5.0, 5.0);
  program.ga.population_size = 16;
  const auto run = offab::run_once(program, store, offab::testing::always_action_one(200));
  CHECK(run.status == RunStatus::ok);
  REQUIRE(run.search.has_value());
  CHECK(run.search->failed_evaluations > 0);
  CHECK(std::isfinite(run.search->best_estimate.value));
}

TEST_CASE("store write failures surface as IoError") {
  TempDir dir;
  const ResultsStore store(dir.path());
  std::filesystem::create_directories(dir.path() / "run-1.json.tmp");
  CHECK_THROWS_AS(offab::run_once(small_program(), store, offab::generate_logs(scenario(), 300)), offab::IoError);
}

TEST_CASE("config must match the log shape") {
  TempDir dir;
  const ResultsStore store(dir.path());
  auto program = small_program();
  program.space = offab::builtin_space(2, 2);
  CHECK_THROWS_AS(offab::run_once(program, store, offab::generate_logs(scenario(), 10)), offab::ValidationError);
  CHECK(store.run_ids().empty());
}

TEST_CASE("drift rule") {
  EvaluationRun prev;
  prev.search.emplace();
  prev.search->best_estimate.value = 0.5;
  prev.search->best_estimate.ci_lo = 0.45;
  prev.search->best_estimate.ci_hi = 0.55;
  prev.probes = {{"a", point(0.3)}, {"b", point(0.4)}, {"c", std::nullopt}};
  auto cur = prev;

  SECTION("overlapping intervals and small probe moves are stable") {
    cur.search->best_estimate.value = 0.52;
    cur.search->best_estimate.ci_lo = 0.50;
    cur.search->best_estimate.ci_hi = 0.60;
    cur.probes[1].estimate->value = 0.43;
    const auto d = offab::compute_drift(cur, prev, 0.05);
    CHECK(d.best_delta == Catch::Approx(0.02));
    CHECK(d.probe_max_abs_delta == Catch::Approx(0.03));
    CHECK_FALSE(d.ci_disjoint);
    CHECK_FALSE(d.flagged);
  }

  SECTION("disjoint intervals flag") {
    cur.search->best_estimate.ci_lo = 0.56;
    cur.search->best_estimate.ci_hi = 0.70;
    CHECK(offab::compute_drift(cur, prev, 0.05).flagged);
  }

  SECTION("missing probe estimates are ignored") {
    cur.probes[2].estimate = point(0.9);
    CHECK(offab::compute_drift(cur, prev, 0.05).probe_max_abs_delta == 0.0);
  }

  SECTION("lowering the threshold never unflags") {
    cur.probes[0].estimate->value = 0.37;
    bool was_flagged = false;
    for (double t : {0.2, 0.1, 0.08, 0.07, 0.05, 0.01, 0.0}) {
      const bool flagged = offab::compute_drift(cur, prev, t).flagged;
      if (was_flagged) CHECK(flagged);
      was_flagged = flagged;
    }
    CHECK(was_flagged);
  }
}

TEST_CASE("probe set depends only on seed and count") {
  auto a = small_program();
  auto b = small_program();
  b.ga.seed = 999;
  b.window = WindowSpec::last(5);
  CHECK(offab::probe_variants(a) == offab::probe_variants(b));
  b.probe_seed = 4;
  CHECK_FALSE(offab::probe_variants(a) == offab::probe_variants(b));
}

TEST_CASE("run_loop replays a prepared log batch by batch") {
  TempDir dir;
  const auto log_path = dir.file("logs.jsonl");
  offab::write_dataset(log_path, offab::generate_logs(scenario(), 3000));
  const ResultsStore store(dir.path() / "store");
  offab::LoopOptions options;
  options.max_runs = 3;
  options.poll_interval = std::chrono::milliseconds(10);
  const auto runs = offab::run_loop(small_program(), store, log_path, options);
  REQUIRE(runs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(runs[i].run_id == i + 1);
    CHECK(runs[i].log_records == 1000 * (i + 1));
    CHECK(runs[i].window.t_min == static_cast<std::int64_t>(1000 * i));
  }
  CHECK_FALSE(runs[0].drift.has_value());
  CHECK(runs[2].drift.has_value());

  SECTION("a restarted loop resumes after the last consumed record") {
    std::stop_source stop;
    options.max_runs = 1;
    options.stop = stop.get_token();
    std::jthread stopper([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      stop.request_stop();
    });
    CHECK(offab::run_loop(small_program(), store, log_path, options).empty());

    std::ofstream out(log_path, std::ios::app);
    offab::write_records(out, offab::generate_logs(scenario(), 1000, 3000).records());
    out.close();
    options.stop = {};
    const auto more = offab::run_loop(small_program(), store, log_path, options);
    REQUIRE(more.size() == 1);
    CHECK(more[0].run_id == 4);
    CHECK(more[0].log_records == 4000);
  }
}

TEST_CASE("run_loop follows a growing log file") {
  TempDir dir;
  const auto log_path = dir.file("logs.jsonl");
  {
    std::ofstream out(log_path);
    out << offab::header_line(4, 3) << "\n";
  }
  const ResultsStore store(dir.path() / "store");
  offab::LoopOptions options;
  options.max_runs = 2;
  options.poll_interval = std::chrono::milliseconds(10);
  std::vector<std::string> diagnostics;
  options.on_diagnostic = [&](const std::string& m) { diagnostics.push_back(m); };

  std::jthread writer([&] {
    for (int batch = 0; batch < 2; ++batch) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      auto sim = scenario();
      sim.seed = static_cast<std::uint64_t>(batch);
      std::ofstream out(log_path, std::ios::app);
      offab::write_records(out, offab::generate_logs(sim, 1000, 1000 * batch).records());
    }
  });
  const auto runs = offab::run_loop(small_program(), store, log_path, options);
  CHECK(runs.size() == 2);
}

TEST_CASE("run_loop fires nothing without new records") {
  TempDir dir;
  const auto log_path = dir.file("logs.jsonl");
  offab::write_dataset(log_path, offab::generate_logs(scenario(), 999));
  const ResultsStore store(dir.path());
  std::stop_source stop;
  offab::LoopOptions options;
  options.max_runs = 1;
  options.poll_interval = std::chrono::milliseconds(10);
  options.stop = stop.get_token();
  std::jthread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(150));
    stop.request_stop();
  });
  CHECK(offab::run_loop(small_program(), store, log_path, options).empty());
  CHECK(store.run_ids().empty());
}

TEST_CASE("run_loop retries an unreadable log file") {
  TempDir dir;
  const auto log_path = dir.file("missing.jsonl");
  const ResultsStore store(dir.path() / "store");
  std::stop_source stop;
  offab::LoopOptions options;
  options.max_runs = 1;
  options.poll_interval = std::chrono::milliseconds(10);
  options.stop = stop.get_token();
  std::size_t diagnostics = 0;
  options.on_diagnostic = [&](const std::string&) { ++diagnostics; };
  std::jthread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(80));
    offab::write_dataset(log_path, offab::generate_logs(scenario(), 1000));
  });
  const auto runs = offab::run_loop(small_program(), store, log_path, options);
  CHECK(runs.size() == 1);
  CHECK(diagnostics > 0);
}

TEST_CASE("wall-clock trigger evaluates the whole log") {
  TempDir dir;
  const auto log_path = dir.file("logs.jsonl");
  offab::write_dataset(log_path, offab::generate_logs(scenario(), 400));
  const ResultsStore store(dir.path() / "store");
  auto program = small_program();
  program.trigger.kind = offab::TriggerKind::every_t_millis;
  program.trigger.millis = 30;
  offab::LoopOptions options;
  options.max_runs = 1;
  options.poll_interval = std::chrono::milliseconds(10);
  const auto start = std::chrono::steady_clock::now();
  const auto runs = offab::run_loop(program, store, log_path, options);
  REQUIRE(runs.size() == 1);
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(30));
  CHECK(runs[0].log_records == 400);
  CHECK(runs[0].window.count == 400);
}

TEST_CASE("identical inputs give identical run sequences") {
  TempDir dir;
  const auto log_path = dir.file("logs.jsonl");
  offab::write_dataset(log_path, offab::generate_logs(scenario(), 2000));
  offab::LoopOptions options;
  options.max_runs = 2;
  options.poll_interval = std::chrono::milliseconds(5);
  const ResultsStore a(dir.path() / "a");
  const ResultsStore b(dir.path() / "b");
  (void)offab::run_loop(small_program(), a, log_path, options);
  (void)offab::run_loop(small_program(), b, log_path, options);
  for (std::size_t id : {1, 2}) {
    CHECK(offab::testing::without_clock(nlohmann::json(a.load(id))) ==
          offab::testing::without_clock(nlohmann::json(b.load(id))));
  }
}

TEST_CASE("program config JSON") {
  const auto c = small_program();
  const auto back = offab::program_config_from_json(offab::to_json(c));
  CHECK(offab::to_json(back) == offab::to_json(c));

  const auto minimal = offab::program_config_from_json(nlohmann::json::parse(R"({"space": {"builtin": {"d": 2, "K": 2}}})"));
  CHECK(minimal.space == offab::builtin_space(2, 2));
  CHECK(minimal.probe_count == 12);
  CHECK(minimal.drift_threshold == 0.05);
  CHECK(minimal.trigger.records == 1000);

  CHECK_THROWS_AS(offab::program_config_from_json(nlohmann::json::parse(R"({"probe_count": 10001})")),
                  offab::ValidationError);
  CHECK_THROWS_AS(offab::program_config_from_json(nlohmann::json::parse(R"({"ga": {"population_size": 1}})")),
                  offab::ValidationError);
  CHECK_THROWS_AS(offab::program_config_from_json(nlohmann::json::parse(R"({"estimator": {"kind": "IS", "cap": "big"}})")),
                  offab::ValidationError);
  CHECK_THROWS_AS(offab::load_program_config("/nonexistent/program.json"), offab::ValidationError);
}
