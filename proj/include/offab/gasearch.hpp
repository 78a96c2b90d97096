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

#ifndef OFFAB_GASEARCH_HPP
#define OFFAB_GASEARCH_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/estimators.hpp"
#include "offab/policyspace.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Generational genetic algorithm over a HyperparameterSpace.
 *
 * Tournament selection, uniform crossover, per-gene Gaussian (clamped) or resampling mutation, and
 * elitism. All randomness for an individual derives from (seed, generation, slot), so the result does
 * not depend on how fitness evaluations are scheduled across threads.
 */

namespace offab {

struct GAConfig {
  std::size_t population_size = 32;
  std::size_t generations = 20;
  std::size_t tournament_size = 3;
  double crossover_prob = 0.9;
  std::optional<double> mutation_prob;  ///< Per gene; unset means 1/n for an n-gene space.
  double mutation_sigma_fraction = 0.1;
  std::size_t elitism = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  ///< Threads used for fitness evaluation.

  void validate() const {
    if (population_size < 2) throw ValidationError("ga: population_size must be >= 2");
    if (generations < 1) throw ValidationError("ga: generations must be >= 1");
    if (tournament_size < 1 || tournament_size > population_size) {
      throw ValidationError("ga: tournament_size must lie in [1, population_size]");
    }
    if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw ValidationError("ga: crossover_prob must lie in [0, 1]");
    if (mutation_prob && !(*mutation_prob >= 0.0 && *mutation_prob <= 1.0)) {
      throw ValidationError("ga: mutation_prob must lie in [0, 1]");
    }
    if (!(mutation_sigma_fraction > 0.0)) throw ValidationError("ga: mutation_sigma_fraction must be > 0");
    if (elitism >= population_size) throw ValidationError("ga: elitism must be < population_size");
    if (workers < 1) throw ValidationError("ga: workers must be >= 1");
  }

  friend bool operator==(const GAConfig&, const GAConfig&) = default;
};

struct GenerationStats {
  double best = 0.0;
  double mean = 0.0;  ///< Over individuals with finite fitness.

  friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

template <class Fitness>
struct SearchResult {
  Variant best_variant;
  Fitness best_fitness{};
  std::vector<GenerationStats> history;
  std::size_t evaluations = 0;
  std::size_t failed_evaluations = 0;  ///< Evaluations that threw or returned NaN; scored -inf.
};

/// Raised when no individual of the initial population has a usable fitness.
class SearchAborted : public Error {
 public:
  using Error::Error;
};

inline double fitness_scalar(double v) { return v; }
inline double fitness_scalar(const Estimate& e) { return e.value; }

template <class F>
concept FitnessFunction = std::invocable<F&, const Variant&> && requires(F& f, const Variant& v) {
  { fitness_scalar(f(v)) } -> std::convertible_to<double>;
};

/// Uniform draw from every hyperparameter's range.
inline Variant random_variant(const HyperparameterSpace& space, Rng& rng) {
  std::vector<Value> values;
  values.reserve(space.size());
  for (const auto& s : space.specs()) {
    switch (s.kind) {
      case ParamKind::continuous:
        values.emplace_back(std::min(s.hi, s.lo + (s.hi - s.lo) * uniform01(rng)));
        break;
      case ParamKind::integer:
        values.emplace_back(std::uniform_int_distribution<std::int64_t>(static_cast<std::int64_t>(s.lo),
                                                                        static_cast<std::int64_t>(s.hi))(rng));
        break;
      case ParamKind::categorical:
        values.emplace_back(s.values[uniform_index(rng, s.values.size())]);
        break;
    }
  }
  return Variant(std::move(values));
}

namespace detail {

template <class Fitness>
struct Scored {
  std::optional<Fitness> fitness;
  double score = -std::numeric_limits<double>::infinity();
};

inline Variant crossover(const Variant& a, const Variant& b, Rng& rng) {
  std::vector<Value> values = a.assignments;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (uniform01(rng) < 0.5) values[i] = b.assignments[i];
  }
  return Variant(std::move(values));
}

inline Variant mutate(const HyperparameterSpace& space, Variant v, double prob, double sigma_fraction, Rng& rng) {
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (!(uniform01(rng) < prob)) continue;
    const auto& s = space[i];
    switch (s.kind) {
      case ParamKind::continuous: {
        const double x = std::get<double>(v.assignments[i]) + sigma_fraction * (s.hi - s.lo) * standard_normal(rng);
        v.assignments[i] = std::clamp(x, s.lo, s.hi);
        break;
      }
      case ParamKind::integer: {
        const double x = static_cast<double>(std::get<std::int64_t>(v.assignments[i])) +
                         sigma_fraction * (s.hi - s.lo) * standard_normal(rng);
        v.assignments[i] = static_cast<std::int64_t>(std::clamp(std::round(x), s.lo, s.hi));
        break;
      }
      case ParamKind::categorical:
        v.assignments[i] = s.values[uniform_index(rng, s.values.size())];
        break;
    }
  }
  return Variant(std::move(v.assignments));
}

}  // namespace detail

/// Maximizes `fitness` over `space`. Fitness failures (exceptions, NaN) score -inf.
template <FitnessFunction F>
auto evolve(const HyperparameterSpace& space, F&& fitness, const GAConfig& config) {
  using Fitness = std::decay_t<std::invoke_result_t<F&, const Variant&>>;
  config.validate();

  constexpr double kFailed = -std::numeric_limits<double>::infinity();
  const double mutation_prob = config.mutation_prob.value_or(1.0 / static_cast<double>(space.size()));

  using Scored = detail::Scored<Fitness>;
  std::unordered_map<std::string, Scored> cache;
  SearchResult<Fitness> result;
  std::optional<std::pair<Variant, Scored>> best;

  auto better = [&](const Variant& a, const Variant& b) {
    const double sa = cache.at(a.id).score;
    const double sb = cache.at(b.id).score;
    return sa > sb || (sa == sb && a.id < b.id);
  };

  auto evaluate = [&](const std::vector<Variant>& population) {
    std::vector<const Variant*> pending;
    for (const auto& v : population) {
      if (cache.try_emplace(v.id).second) pending.push_back(&v);
    }
    std::vector<Scored> scored(pending.size());
    auto run_one = [&](std::size_t i) {
      try {
        Fitness f = fitness(*pending[i]);
        const double s = fitness_scalar(f);
        if (!std::isnan(s)) {
          scored[i].score = s;
          scored[i].fitness = std::move(f);
        }
      } catch (const std::exception&) {
        // scored[i] stays at -inf
      }
    };
    const std::size_t threads = std::min(config.workers, pending.size());
    if (threads <= 1) {
      for (std::size_t i = 0; i < pending.size(); ++i) run_one(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      pool.reserve(threads);
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < pending.size(); i = next++) run_one(i);
        });
      }
    }
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (!scored[i].fitness) ++result.failed_evaluations;
      cache[pending[i]->id] = std::move(scored[i]);
    }
    result.evaluations += pending.size();
  };

  auto record = [&](std::vector<Variant>& population) {
    std::sort(population.begin(), population.end(), better);
    GenerationStats stats;
    stats.best = cache.at(population.front().id).score;
    double sum = 0.0;
    std::size_t finite = 0;
    for (const auto& v : population) {
      const double s = cache.at(v.id).score;
      if (std::isfinite(s)) {
        sum += s;
        ++finite;
      }
    }
    stats.mean = finite > 0 ? sum / static_cast<double>(finite) : kFailed;
    result.history.push_back(stats);
    const auto& top = population.front();
    if (!best || better(top, best->first)) best.emplace(top, cache.at(top.id));
  };

  auto tournament = [&](const std::vector<Variant>& population, Rng& rng) -> const Variant& {
    const Variant* winner = &population[uniform_index(rng, population.size())];
    for (std::size_t t = 1; t < config.tournament_size; ++t) {
      const Variant& challenger = population[uniform_index(rng, population.size())];
      if (better(challenger, *winner)) winner = &challenger;
    }
    return *winner;
  };

  std::vector<Variant> population;
  population.reserve(config.population_size);
  for (std::size_t slot = 0; slot < config.population_size; ++slot) {
    Rng rng(derive_seed(config.seed, 0, slot));
    population.push_back(random_variant(space, rng));
  }
  evaluate(population);
  if (std::none_of(population.begin(), population.end(),
                   [&](const Variant& v) { return cache.at(v.id).fitness.has_value(); })) {
    throw SearchAborted("every individual of the initial population failed fitness evaluation");
  }
  record(population);

  for (std::size_t gen = 1; gen < config.generations; ++gen) {
    std::vector<Variant> next(population.begin(),
                              population.begin() + static_cast<std::ptrdiff_t>(config.elitism));
    for (std::size_t slot = config.elitism; slot < config.population_size; ++slot) {
      Rng rng(derive_seed(config.seed, gen, slot));
      const Variant& first = tournament(population, rng);
      const Variant& second = tournament(population, rng);
      Variant child = uniform01(rng) < config.crossover_prob ? detail::crossover(first, second, rng) : first;
      next.push_back(detail::mutate(space, std::move(child), mutation_prob, config.mutation_sigma_fraction, rng));
    }
    population = std::move(next);
    evaluate(population);
    record(population);
  }

  result.best_variant = best->first;
  result.best_fitness = std::move(*best->second.fitness);
  return result;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const GAConfig& c) {
  j = nlohmann::json{{"population_size", c.population_size},
                     {"generations", c.generations},
                     {"tournament_size", c.tournament_size},
                     {"crossover_prob", c.crossover_prob},
                     {"mutation_sigma_fraction", c.mutation_sigma_fraction},
                     {"elitism", c.elitism},
                     {"seed", c.seed},
                     {"workers", c.workers}};
  j["mutation_prob"] = c.mutation_prob ? nlohmann::json(*c.mutation_prob) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, GAConfig& c) {
  c = GAConfig{};
  c.population_size = j.value("population_size", c.population_size);
  c.generations = j.value("generations", c.generations);
  c.tournament_size = j.value("tournament_size", c.tournament_size);
  c.crossover_prob = j.value("crossover_prob", c.crossover_prob);
  if (auto it = j.find("mutation_prob"); it != j.end() && !it->is_null()) c.mutation_prob = it->get<double>();
  c.mutation_sigma_fraction = j.value("mutation_sigma_fraction", c.mutation_sigma_fraction);
  c.elitism = j.value("elitism", c.elitism);
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.validate();
}

inline void to_json(nlohmann::json& j, const GenerationStats& s) {
  j = nlohmann::json{{"best", detail::finite_or_null(s.best)}, {"mean", detail::finite_or_null(s.mean)}};
}

inline void from_json(const nlohmann::json& j, GenerationStats& s) {
  constexpr double kFailed = -std::numeric_limits<double>::infinity();
  s.best = j.at("best").is_null() ? kFailed : j.at("best").get<double>();
  s.mean = j.at("mean").is_null() ? kFailed : j.at("mean").get<double>();
}

}  // namespace offab

#endif  // OFFAB_GASEARCH_HPP
