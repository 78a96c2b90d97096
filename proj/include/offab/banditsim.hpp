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

#ifndef OFFAB_BANDITSIM_HPP
#define OFFAB_BANDITSIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/gasearch.hpp"
#include "offab/logstore.hpp"
#include "offab/policyspace.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Finite-context Bernoulli bandit that produces logs under a known logging policy and exact
 * ground-truth policy values.
 */

namespace offab {

inline constexpr double kMinLoggingFloor = 0.05;

struct SimConfig {
  std::vector<std::vector<double>> context_vectors;  ///< C x d
  std::vector<double> context_probs;                 ///< C
  std::vector<std::vector<double>> reward_means;     ///< C x K, Bernoulli parameters
  Policy logging_policy;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t num_contexts() const noexcept { return context_vectors.size(); }
  [[nodiscard]] std::size_t dimension() const noexcept { return logging_policy.dimension; }
  [[nodiscard]] std::size_t num_actions() const noexcept { return logging_policy.num_actions; }

  void validate() const {
    logging_policy.validate();
    const std::size_t c = context_vectors.size();
    if (c < 1) throw ValidationError("sim: at least one context is required");
    if (context_probs.size() != c) throw ValidationError("sim: context_probs must have C entries");
    if (reward_means.size() != c) throw ValidationError("sim: reward_means must have C rows");
    double total = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      if (context_vectors[i].size() != dimension()) throw ValidationError("sim: context vector dimension != d");
      for (const double x : context_vectors[i]) {
        if (!std::isfinite(x)) throw ValidationError("sim: non-finite context entry");
      }
      if (!(context_probs[i] >= 0.0)) throw ValidationError("sim: context_probs must be >= 0");
      total += context_probs[i];
      if (reward_means[i].size() != num_actions()) throw ValidationError("sim: reward_means rows must have K entries");
      for (const double m : reward_means[i]) {
        if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("sim: reward_means entries must lie in [0, 1]");
      }
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("sim: context_probs must sum to 1");
    if (logging_policy.floor < kMinLoggingFloor) throw ValidationError("sim: logging policy floor must be >= 0.05");
  }

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

namespace detail {

/// Smallest index whose cumulative probability exceeds u; falls back to the last positive entry.
inline std::size_t draw_categorical(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace detail

/// `n` records with timestamps t0, t0+1, ...; deterministic in config.seed.
inline LogDataset generate_logs(const SimConfig& config, std::size_t n, std::int64_t t0 = 0) {
  config.validate();
  std::vector<std::vector<double>> logging_probs;
  logging_probs.reserve(config.num_contexts());
  for (const auto& x : config.context_vectors) logging_probs.push_back(action_probabilities(config.logging_policy, x));

  Rng rng(config.seed);
  std::vector<LogRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = detail::draw_categorical(config.context_probs, uniform01(rng));
    const auto a = detail::draw_categorical(logging_probs[c], uniform01(rng));
    const double reward = uniform01(rng) < config.reward_means[c][a] ? 1.0 : 0.0;
    records.push_back({t0 + static_cast<std::int64_t>(i), config.context_vectors[c], a, logging_probs[c][a], reward});
  }
  return LogDataset(config.dimension(), config.num_actions(), std::move(records));
}

/// Exact expected reward of `policy`: sum_c P(c) sum_a pi(a|x_c) m[c][a].
inline double true_value(const SimConfig& config, const Policy& policy) {
  if (policy.dimension != config.dimension() || policy.num_actions != config.num_actions()) {
    throw ValidationError("true_value: policy shape does not match the simulator");
  }
  double v = 0.0;
  std::vector<double> probs(policy.num_actions);
  for (std::size_t c = 0; c < config.num_contexts(); ++c) {
    action_probabilities(policy, config.context_vectors[c], probs);
    double inner = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) inner += probs[a] * config.reward_means[c][a];
    v += config.context_probs[c] * inner;
  }
  return v;
}

/// Emulates a product change: every reward mean moves by `delta`, clamped to [0, 1].
inline SimConfig shift_rewards(SimConfig config, double delta) {
  for (auto& row : config.reward_means) {
    for (auto& m : row) m = std::clamp(m + delta, 0.0, 1.0);
  }
  return config;
}

/**
 * Desk-scale scenario: C=5, d=4, K=3, standard-normal context vectors, uniform context
 * probabilities, reward means uniform in [0.1, 0.9], and a logging policy decoded from a random
 * builtin-space variant with its floor set to `logging_floor`.
 */
inline SimConfig default_scenario(std::uint64_t seed, double logging_floor = 0.1) {
  constexpr std::size_t kContexts = 5;
  constexpr std::size_t kDim = 4;
  constexpr std::size_t kActions = 3;
  SimConfig cfg;
  cfg.seed = seed;
  Rng ctx_rng(derive_seed(seed, 1));
  cfg.context_vectors.assign(kContexts, std::vector<double>(kDim));
  for (auto& row : cfg.context_vectors) {
    for (auto& x : row) x = standard_normal(ctx_rng);
  }
  cfg.context_probs.assign(kContexts, 1.0 / static_cast<double>(kContexts));
  Rng reward_rng(derive_seed(seed, 2));
  cfg.reward_means.assign(kContexts, std::vector<double>(kActions));
  for (auto& row : cfg.reward_means) {
    for (auto& m : row) m = 0.1 + 0.8 * uniform01(reward_rng);
  }
  const auto space = builtin_space(kDim, kActions);
  Rng policy_rng(derive_seed(seed, 3));
  cfg.logging_policy = decode(space, random_variant(space, policy_rng));
  cfg.logging_policy.floor = logging_floor;
  cfg.validate();
  return cfg;
}

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  j = nlohmann::json{{"C", c.num_contexts()},
                     {"d", c.dimension()},
                     {"K", c.num_actions()},
                     {"context_vectors", c.context_vectors},
                     {"context_probs", c.context_probs},
                     {"reward_means", c.reward_means},
                     {"logging_policy", c.logging_policy},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SimConfig& c) {
  c.context_vectors = j.at("context_vectors").get<std::vector<std::vector<double>>>();
  c.context_probs = j.at("context_probs").get<std::vector<double>>();
  c.reward_means = j.at("reward_means").get<std::vector<std::vector<double>>>();
  c.logging_policy = j.at("logging_policy").get<Policy>();
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("C") && j.at("C").get<std::size_t>() != c.num_contexts()) throw ValidationError("sim: C disagrees with context_vectors");
  if (j.contains("d") && j.at("d").get<std::size_t>() != c.dimension()) throw ValidationError("sim: d disagrees with the logging policy");
  if (j.contains("K") && j.at("K").get<std::size_t>() != c.num_actions()) throw ValidationError("sim: K disagrees with the logging policy");
  c.validate();
}

}  // namespace offab

#endif  // OFFAB_BANDITSIM_HPP
