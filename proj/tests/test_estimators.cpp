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

#include <cmath>
#include <numeric>

#include "offab/banditsim.hpp"
#include "offab/estimators.hpp"
#include "offab/gasearch.hpp"

using Catch::Approx;
using offab::EstimatorConfig;
using offab::EstimatorKind;
using offab::LogDataset;
using offab::LogRecord;
using offab::Policy;

namespace {

EstimatorConfig config(EstimatorKind kind, double cap = 100.0, std::size_t resamples = 0) {
  EstimatorConfig c;
  c.kind = kind;
  c.cap = cap;
  c.bootstrap_resamples = resamples;
  return c;
}

/// A window logged by `policy` itself, with the given rewards.
LogDataset logged_by(const Policy& policy, const std::vector<double>& rewards, std::uint64_t seed = 1) {
  offab::Rng rng(seed);
  std::vector<LogRecord> records;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    std::vector<double> x(policy.dimension);
    for (auto& v : x) v = offab::standard_normal(rng);
    const auto probs = offab::action_probabilities(policy, x);
    const auto a = offab::uniform_index(rng, policy.num_actions);
    records.push_back({static_cast<std::int64_t>(i), x, a, probs[a], rewards[i]});
  }
  return LogDataset(policy.dimension, policy.num_actions, std::move(records));
}

Policy random_policy(std::size_t d, std::size_t k, offab::Rng& rng) {
  const auto space = offab::builtin_space(d, k);
  return offab::decode(space, offab::random_variant(space, rng));
}

}  // namespace

TEST_CASE("importance weight is the probability ratio") {
  // theta = [ln 1.5, 0] gives pi(0|x=1) = 1.5 / 2.5 = 0.6
  const Policy p{2, 1, {std::log(1.5), 0.0}, 1.0, 0.0, offab::FeatureMap::identity};
  const LogDataset window(1, 2, {{0, {1.0}, 0, 0.3, 1.0}});
  const auto w = offab::importance_weights(p, window);
  REQUIRE(w.size() == 1);
  CHECK(w[0] == Approx(2.0).margin(1e-12));
}

TEST_CASE("weights are one when target equals logging policy") {
  offab::Rng rng(3);
  const auto p = random_policy(3, 4, rng);
  for (double w : offab::importance_weights(p, logged_by(p, std::vector<double>(50, 1.0)))) {
    CHECK(std::abs(w - 1.0) <= 1e-12);
  }
}

TEST_CASE("floored policies bound the weight by max p / min p") {
  // K=2, floor 0.1 on both sides: max pi = 0.95, min mu = 0.05, so w <= 19.
  const Policy target{2, 1, {5.0, -5.0}, 0.05, 0.1, offab::FeatureMap::identity};
  const Policy logging{2, 1, {-5.0, 5.0}, 0.05, 0.1, offab::FeatureMap::identity};
  offab::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{offab::standard_normal(rng)};
    const auto mu = offab::action_probabilities(logging, x);
    const auto a = offab::uniform_index(rng, 2);
    const LogDataset window(1, 2, {{0, x, a, mu[a], 1.0}});
    CHECK(offab::importance_weights(target, window)[0] <= 19.0 + 1e-9);
  }
  const std::vector<double> x{1.0};
  const LogDataset extreme(1, 2, {{0, x, 0, offab::action_probabilities(logging, x)[0], 1.0}});
  CHECK(offab::importance_weights(target, extreme)[0] == Approx(19.0).margin(1e-9));
}

TEST_CASE("hand-computed estimates") {
  const std::vector<double> w{2.0, 0.5, 1.0};
  const std::vector<double> r{1.0, 1.0, 0.0};
  CHECK(offab::estimate_from_weights(w, r, config(EstimatorKind::is)).value == Approx(2.5 / 3).margin(1e-9));
  CHECK(offab::estimate_from_weights(w, r, config(EstimatorKind::cis, 1.0)).value == Approx(0.5).margin(1e-9));
  CHECK(offab::estimate_from_weights(w, r, config(EstimatorKind::ncis, 1.0)).value == Approx(0.6).margin(1e-9));

  const auto is = offab::estimate_from_weights(w, r, config(EstimatorKind::is));
  CHECK(is.ess == Approx(12.25 / 5.25).margin(1e-9));
  CHECK(is.max_weight == 2.0);
  CHECK(is.capped_fraction == 0.0);
  CHECK(is.n == 3);

  const auto cis = offab::estimate_from_weights(w, r, config(EstimatorKind::cis, 1.0));
  CHECK(cis.capped_fraction == Approx(1.0 / 3));
  CHECK(cis.ess == Approx(2.5 * 2.5 / 2.25).margin(1e-12));
}

TEST_CASE("zero rewards give zero for every estimator") {
  const std::vector<double> w{2.0, 0.5, 1.0};
  const std::vector<double> r{0.0, 0.0, 0.0};
  for (auto kind : {EstimatorKind::is, EstimatorKind::cis, EstimatorKind::ncis}) {
    CHECK(offab::estimate_from_weights(w, r, config(kind, 1.0)).value == 0.0);
  }
}

TEST_CASE("identity policy gives the empirical mean") {
  offab::Rng rng(8);
  const auto p = random_policy(2, 3, rng);
  const auto window = logged_by(p, {1.0, 0.0, 1.0});
  for (auto kind : {EstimatorKind::is, EstimatorKind::cis, EstimatorKind::ncis}) {
    CHECK(std::abs(offab::estimate(p, window, config(kind, 1.0)).value - 2.0 / 3.0) <= 1e-12);
  }
}

TEST_CASE("estimator errors") {
  const Policy p{2, 1, {0.0, 0.0}, 1.0, 0.0, offab::FeatureMap::identity};
  const LogDataset empty(1, 2);
  CHECK_THROWS_WITH(offab::estimate(p, empty, config(EstimatorKind::is)), "empty window");
  const std::vector<double> zeros{0.0, 0.0};
  const std::vector<double> r{1.0, 0.0};
  CHECK_THROWS_WITH(offab::estimate_from_weights(zeros, r, config(EstimatorKind::ncis)), "degenerate weights");
  CHECK(offab::estimate_from_weights(zeros, r, config(EstimatorKind::is)).ess == 0.0);
  const Policy wrong{3, 1, {0.0, 0.0, 0.0}, 1.0, 0.0, offab::FeatureMap::identity};
  CHECK_THROWS_AS(offab::estimate(wrong, LogDataset(1, 2, {{0, {1.0}, 0, 0.5, 1.0}}), config(EstimatorKind::is)),
                  offab::ValidationError);
  EstimatorConfig bad;
  bad.cap = 0.0;
  CHECK_THROWS_AS(bad.validate(), offab::ValidationError);
  bad = EstimatorConfig{};
  bad.ci_level = 1.0;
  CHECK_THROWS_AS(bad.validate(), offab::ValidationError);
}

TEST_CASE("capping and normalization properties") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    offab::Rng rng(seed);
    const std::size_t n = 1 + offab::uniform_index(rng, 40);
    std::vector<double> w(n);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 30.0 * offab::uniform01(rng) * offab::uniform01(rng);
      r[i] = offab::uniform01(rng) < 0.3 ? 0.0 : offab::uniform01(rng);
    }
    w[0] += 0.01;  // keep the normalizer positive
    const double is = offab::estimate_from_weights(w, r, config(EstimatorKind::is)).value;
    const double max_w = *std::max_element(w.begin(), w.end());
    double previous = -1.0;
    for (double cap : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
      const double cis = offab::estimate_from_weights(w, r, config(EstimatorKind::cis, cap)).value;
      CHECK(cis <= is + 1e-15);
      CHECK(cis >= previous);
      previous = cis;
      if (cap >= max_w) CHECK(cis == is);
    }
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    for (double cap : {1.0, 5.0, 100.0}) {
      const double v = offab::estimate_from_weights(w, r, config(EstimatorKind::ncis, cap)).value;
      CHECK(v >= *lo - 1e-15);
      CHECK(v <= *hi + 1e-15);

      const double alpha = 0.5 + 3.0 * offab::uniform01(rng);
      const double beta = offab::standard_normal(rng);
      std::vector<double> scaled(r);
      std::vector<double> shifted(r);
      for (std::size_t i = 0; i < n; ++i) {
        scaled[i] *= alpha;
        shifted[i] += beta;
      }
      CHECK(offab::estimate_from_weights(w, scaled, config(EstimatorKind::ncis, cap)).value ==
            Approx(alpha * v).margin(1e-12));
      CHECK(offab::estimate_from_weights(w, shifted, config(EstimatorKind::ncis, cap)).value ==
            Approx(v + beta).margin(1e-12));
    }
  }
}

TEST_CASE("ess lies in (0, n]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    offab::Rng rng(seed);
    const std::size_t n = 1 + offab::uniform_index(rng, 100);
    std::vector<double> w(n);
    for (auto& x : w) x = 0.01 + 10 * offab::uniform01(rng);
    const double ess = offab::effective_sample_size(w);
    CHECK(ess > 0.0);
    CHECK(ess <= static_cast<double>(n));
  }
  CHECK(offab::effective_sample_size(std::vector<double>(7, 3.0)) == 7.0);
}

TEST_CASE("quantile interpolates between order statistics") {
  const std::vector<double> s{1.0, 2.0, 4.0, 8.0};
  CHECK(offab::quantile(s, 0.0) == 1.0);
  CHECK(offab::quantile(s, 1.0) == 8.0);
  CHECK(offab::quantile(s, 0.5) == Approx(3.0));   // h = 1.5
  CHECK(offab::quantile(s, 0.25) == Approx(1.75)); // h = 0.75
  CHECK(offab::quantile(std::vector<double>{5.0}, 0.3) == 5.0);
}

TEST_CASE("bootstrap interval") {
  offab::Rng rng(21);
  const auto sim = offab::default_scenario(5);
  const auto window = offab::generate_logs(sim, 400);
  const auto target = random_policy(4, 3, rng);

  SECTION("deterministic under a fixed seed and brackets the value") {
    for (auto kind : {EstimatorKind::is, EstimatorKind::cis, EstimatorKind::ncis}) {
      auto c = config(kind, 5.0, 300);
      c.seed = 77;
      const auto a = offab::estimate(target, window, c);
      const auto b = offab::estimate(target, window, c);
      CHECK(a == b);
      REQUIRE(a.ci_lo.has_value());
      CHECK(*a.ci_lo <= a.value);
      CHECK(a.value <= *a.ci_hi);
      CHECK(*a.ci_hi - *a.ci_lo > 0.0);
      c.seed = 78;
      CHECK(offab::estimate(target, window, c).ci_lo != a.ci_lo);
    }
  }

  SECTION("no interval without resamples") {
    const auto e = offab::estimate(target, window, config(EstimatorKind::ncis, 100.0, 0));
    CHECK_FALSE(e.ci_lo.has_value());
    CHECK_FALSE(e.ci_hi.has_value());
  }

  SECTION("identical rewards under the logging policy give zero width") {
    const auto p = random_policy(2, 2, rng);
    const auto w = logged_by(p, std::vector<double>(60, 0.3));
    for (auto kind : {EstimatorKind::is, EstimatorKind::cis, EstimatorKind::ncis}) {
      const auto e = offab::estimate(p, w, config(kind, 100.0, 100));
      CHECK(*e.ci_hi - *e.ci_lo == 0.0);
    }
  }

  SECTION("wider level gives a wider interval") {
    auto narrow = config(EstimatorKind::ncis, 100.0, 400);
    auto wide = narrow;
    narrow.ci_level = 0.5;
    wide.ci_level = 0.99;
    const auto a = offab::estimate(target, window, narrow);
    const auto b = offab::estimate(target, window, wide);
    CHECK(*b.ci_lo <= *a.ci_lo);
    CHECK(*b.ci_hi >= *a.ci_hi);
  }
}

TEST_CASE("estimator config and estimate JSON round-trip") {
  EstimatorConfig c;
  c.kind = EstimatorKind::cis;
  c.cap = 7.5;
  c.bootstrap_resamples = 33;
  c.ci_level = 0.9;
  c.seed = 12345678901234ULL;
  CHECK(nlohmann::json(c).get<EstimatorConfig>() == c);
  const nlohmann::json dr{{"kind", "DR"}};
  CHECK_THROWS_AS(dr.get<EstimatorConfig>(), offab::ValidationError);

  offab::Estimate e{0.25, 0.1, 0.4, 12.5, 20, 3.0, 0.05};
  CHECK(nlohmann::json(e).get<offab::Estimate>() == e);
}
