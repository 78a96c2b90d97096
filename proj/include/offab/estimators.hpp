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

#ifndef OFFAB_ESTIMATORS_HPP
#define OFFAB_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/logstore.hpp"
#include "offab/policyspace.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Off-policy value estimators over a log window.
 *
 * With importance weights w_i = pi(a_i|x_i) / mu(a_i|x_i), rewards r_i and cap M:
 *
 *  - IS:   (1/n) sum w_i r_i
 *  - CIS:  (1/n) sum min(w_i, M) r_i
 *  - NCIS: sum min(w_i, M) r_i / sum min(w_i, M)
 *
 * Confidence intervals come from a seeded percentile bootstrap over record indices; every resample
 * reruns capping and normalization.
 */

namespace offab {

enum class EstimatorKind { is, cis, ncis };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::is: return "IS";
    case EstimatorKind::cis: return "CIS";
    case EstimatorKind::ncis: return "NCIS";
  }
  return "?";
}

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "IS") return EstimatorKind::is;
  if (s == "CIS") return EstimatorKind::cis;
  if (s == "NCIS") return EstimatorKind::ncis;
  throw ValidationError("unknown estimator kind \"" + s + "\" (expected IS, CIS or NCIS)");
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::ncis;
  double cap = 100.0;                   ///< M; ignored by IS.
  std::size_t bootstrap_resamples = 200;  ///< 0 disables the CI.
  double ci_level = 0.95;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(cap > 0.0)) throw ValidationError("estimator: cap must be > 0");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("estimator: ci_level must lie in (0, 1)");
  }

  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

struct Estimate {
  double value = 0.0;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  double ess = 0.0;
  std::size_t n = 0;
  double max_weight = 0.0;
  double capped_fraction = 0.0;

  friend bool operator==(const Estimate&, const Estimate&) = default;
};

/// w_i = pi(a_i|x_i) / mu(a_i|x_i) for every record of `window`.
inline std::vector<double> importance_weights(const Policy& policy, const LogDataset& window) {
  if (policy.dimension != window.dimension() || policy.num_actions != window.num_actions()) {
    throw ValidationError("policy shape (K=" + std::to_string(policy.num_actions) + ", d=" +
                          std::to_string(policy.dimension) + ") does not match the log (K=" +
                          std::to_string(window.num_actions()) + ", d=" + std::to_string(window.dimension()) + ")");
  }
  std::vector<double> weights;
  weights.reserve(window.size());
  std::vector<double> probs(policy.num_actions);
  for (const auto& r : window) {
    action_probabilities(policy, r.context, probs);
    weights.push_back(probs[r.action] / r.propensity);
  }
  return weights;
}

namespace detail {

/// Point value of `kind` over the given records. Throws EstimationError on degenerate input.
inline double point_value(EstimatorKind kind, double cap, std::span<const double> w, std::span<const double> r) {
  if (w.empty()) throw EstimationError("empty window");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double wi = kind == EstimatorKind::is ? w[i] : std::min(w[i], cap);
    num += wi * r[i];
    den += wi;
  }
  if (kind == EstimatorKind::ncis) {
    if (!(den > 0.0)) throw EstimationError("degenerate weights");
    return num / den;
  }
  return num / static_cast<double>(w.size());
}

}  // namespace detail

/// Empirical quantile with linear interpolation between order statistics. `sorted` must be ascending.
inline double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw EstimationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// (sum w)^2 / sum w^2; zero when every weight is zero.
inline double effective_sample_size(std::span<const double> w) {
  double s = 0.0;
  double s2 = 0.0;
  for (const double x : w) {
    s += x;
    s2 += x * x;
  }
  if (!(s2 > 0.0)) return 0.0;
  return std::min(s * s / s2, static_cast<double>(w.size()));
}

/// Estimate from precomputed importance weights and rewards.
inline Estimate estimate_from_weights(std::span<const double> weights, std::span<const double> rewards,
                                      const EstimatorConfig& config) {
  config.validate();
  if (weights.size() != rewards.size()) throw ValidationError("weights and rewards differ in length");
  if (weights.empty()) throw EstimationError("empty window");

  Estimate e;
  e.n = weights.size();
  e.value = detail::point_value(config.kind, config.cap, weights, rewards);
  e.max_weight = *std::max_element(weights.begin(), weights.end());

  if (config.kind == EstimatorKind::is) {
    e.ess = effective_sample_size(weights);
  } else {
    std::vector<double> capped(weights.begin(), weights.end());
    std::size_t over = 0;
    for (auto& w : capped) {
      if (w > config.cap) {
        ++over;
        w = config.cap;
      }
    }
    e.ess = effective_sample_size(capped);
    e.capped_fraction = static_cast<double>(over) / static_cast<double>(e.n);
  }

  if (config.bootstrap_resamples > 0) {
    Rng rng(derive_seed(config.seed, 0xB0075A4DULL));
    std::vector<double> bw(e.n);
    std::vector<double> br(e.n);
    std::vector<double> stats;
    stats.reserve(config.bootstrap_resamples);
    for (std::size_t b = 0; b < config.bootstrap_resamples; ++b) {
      for (std::size_t i = 0; i < e.n; ++i) {
        const auto k = uniform_index(rng, e.n);
        bw[i] = weights[k];
        br[i] = rewards[k];
      }
      try {
        stats.push_back(detail::point_value(config.kind, config.cap, bw, br));
      } catch (const EstimationError&) {
        // A resample whose capped weights sum to zero has no NCIS value; it is left out.
      }
    }
    if (!stats.empty()) {
      std::sort(stats.begin(), stats.end());
      const double tail = (1.0 - config.ci_level) / 2.0;
      e.ci_lo = std::min(quantile(stats, tail), e.value);
      e.ci_hi = std::max(quantile(stats, 1.0 - tail), e.value);
    }
  }
  return e;
}

/// Off-policy estimate of `policy`'s expected reward on `window`.
inline Estimate estimate(const Policy& policy, const LogDataset& window, const EstimatorConfig& config) {
  if (window.empty()) throw EstimationError("empty window");
  const auto weights = importance_weights(policy, window);
  std::vector<double> rewards;
  rewards.reserve(window.size());
  for (const auto& r : window) rewards.push_back(r.reward);
  return estimate_from_weights(weights, rewards, config);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const EstimatorConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"cap", c.cap},
                     {"bootstrap_resamples", c.bootstrap_resamples},
                     {"ci_level", c.ci_level},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EstimatorConfig& c) {
  c = EstimatorConfig{};
  c.kind = estimator_kind_from_string(j.value("kind", std::string{"NCIS"}));
  c.cap = j.value("cap", c.cap);
  c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
  c.ci_level = j.value("ci_level", c.ci_level);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json optional_or_null(const std::optional<double>& v) {
  return v ? finite_or_null(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const Estimate& e) {
  j = nlohmann::json{{"value", detail::finite_or_null(e.value)},
                     {"ci_lo", detail::optional_or_null(e.ci_lo)},
                     {"ci_hi", detail::optional_or_null(e.ci_hi)},
                     {"ess", e.ess},
                     {"n", e.n},
                     {"max_weight", detail::finite_or_null(e.max_weight)},
                     {"capped_fraction", e.capped_fraction}};
}

inline void from_json(const nlohmann::json& j, Estimate& e) {
  e.value = j.at("value").get<double>();
  e.ci_lo = detail::optional_from(j, "ci_lo");
  e.ci_hi = detail::optional_from(j, "ci_hi");
  e.ess = j.at("ess").get<double>();
  e.n = j.at("n").get<std::size_t>();
  e.max_weight = j.at("max_weight").is_null() ? 0.0 : j.at("max_weight").get<double>();
  e.capped_fraction = j.at("capped_fraction").get<double>();
}

}  // namespace offab

#endif  // OFFAB_ESTIMATORS_HPP
