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

#ifndef OFFAB_TESTS_FIXTURES_HPP
#define OFFAB_TESTS_FIXTURES_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "offab/banditsim.hpp"
#include "offab/orchestrator.hpp"

namespace offab::testing {

/// A small, fast program over the default scenario's 4x3 builtin space.
inline ProgramConfig small_program(std::size_t window = 1000) {
  ProgramConfig c;
  c.space = builtin_space(4, 3);
  c.estimator.bootstrap_resamples = 50;
  c.estimator.seed = 5;
  c.ga.population_size = 8;
  c.ga.generations = 3;
  c.ga.seed = 11;
  c.window = WindowSpec::last(window);
  c.trigger.records = window;
  c.probe_count = 4;
  c.probe_seed = 3;
  return c;
}

/// One-dimensional two-action log where every record chose action 1 at context x = 50.
inline LogDataset always_action_one(std::size_t n) {
  std::vector<LogRecord> records;
  for (std::size_t i = 0; i < n; ++i) records.push_back({static_cast<std::int64_t>(i), {50.0}, 1, 0.5, i % 2 == 0 ? 1.0 : 0.0});
  return LogDataset(1, 2, std::move(records));
}

/**
 * Space over always_action_one() logs with floor 0 and temperature 0.05. Whenever
 * w_0_0 - w_1_0 > 0.75 the probability of action 1 underflows to exactly zero, so NCIS has no
 * normalizer. `lo0`/`hi0` bound w_0_0, `lo1`/`hi1` bound w_1_0.
 */
inline HyperparameterSpace underflow_space(double lo0, double hi0, double lo1, double hi1) {
  return HyperparameterSpace({HyperparameterSpec::continuous("w_0_0", lo0, hi0),
                              HyperparameterSpec::continuous("w_1_0", lo1, hi1),
                              HyperparameterSpec::continuous("temperature", 0.05, 0.05),
                              HyperparameterSpec::continuous("floor", 0.0, 0.0),
                              HyperparameterSpec::categorical("feature_map", {"identity"})});
}

/// Run file contents with wall-clock fields removed.
inline nlohmann::json without_clock(nlohmann::json run) {
  run.erase("started_at");
  run.erase("finished_at");
  return run;
}

}  // namespace offab::testing

#endif  // OFFAB_TESTS_FIXTURES_HPP
