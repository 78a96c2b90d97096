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

#ifndef OFFAB_POLICYSPACE_HPP
#define OFFAB_POLICYSPACE_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Hyperparameter spaces, variant genomes and the linear-softmax policy family they decode to.
 */

namespace offab {

enum class ParamKind { continuous, integer, categorical };

inline const char* to_string(ParamKind k) {
  switch (k) {
    case ParamKind::continuous: return "continuous";
    case ParamKind::integer: return "integer";
    case ParamKind::categorical: return "categorical";
  }
  return "?";
}

/// One assigned hyperparameter value: real, integer or categorical label.
using Value = std::variant<double, std::int64_t, std::string>;

inline std::string render(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

/// A named hyperparameter and its range of valid values.
struct HyperparameterSpec {
  std::string name;
  ParamKind kind = ParamKind::continuous;
  double lo = 0.0;                  ///< continuous / integer
  double hi = 0.0;                  ///< continuous / integer, inclusive
  std::vector<std::string> values;  ///< categorical

  static HyperparameterSpec continuous(std::string name, double lo, double hi) {
    return {std::move(name), ParamKind::continuous, lo, hi, {}};
  }
  static HyperparameterSpec integer(std::string name, std::int64_t lo, std::int64_t hi) {
    return {std::move(name), ParamKind::integer, static_cast<double>(lo), static_cast<double>(hi), {}};
  }
  static HyperparameterSpec categorical(std::string name, std::vector<std::string> values) {
    return {std::move(name), ParamKind::categorical, 0.0, 0.0, std::move(values)};
  }

  void validate() const {
    if (name.empty()) throw ValidationError("hyperparameter name must not be empty");
    if (kind == ParamKind::categorical) {
      if (values.empty()) throw ValidationError("hyperparameter " + name + ": categorical value list is empty");
      std::unordered_set<std::string> seen(values.begin(), values.end());
      if (seen.size() != values.size()) throw ValidationError("hyperparameter " + name + ": duplicate categorical values");
      return;
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi)) {
      throw ValidationError("hyperparameter " + name + ": range must satisfy lo <= hi");
    }
    if (kind == ParamKind::integer && (std::trunc(lo) != lo || std::trunc(hi) != hi)) {
      throw ValidationError("hyperparameter " + name + ": integer range bounds must be integral");
    }
  }

  [[nodiscard]] bool contains(const Value& v) const {
    switch (kind) {
      case ParamKind::continuous: {
        const auto* d = std::get_if<double>(&v);
        return d != nullptr && *d >= lo && *d <= hi;
      }
      case ParamKind::integer: {
        const auto* i = std::get_if<std::int64_t>(&v);
        return i != nullptr && static_cast<double>(*i) >= lo && static_cast<double>(*i) <= hi;
      }
      case ParamKind::categorical: {
        const auto* s = std::get_if<std::string>(&v);
        return s != nullptr && std::find(values.begin(), values.end(), *s) != values.end();
      }
    }
    return false;
  }

  friend bool operator==(const HyperparameterSpec&, const HyperparameterSpec&) = default;
};

/// Ordered set of hyperparameters; the schema every variant genome follows.
class HyperparameterSpace {
 public:
  explicit HyperparameterSpace(std::vector<HyperparameterSpec> specs) : specs_(std::move(specs)) {
    if (specs_.empty()) throw ValidationError("hyperparameter space must declare at least one hyperparameter");
    std::unordered_set<std::string> names;
    for (const auto& s : specs_) {
      s.validate();
      if (!names.insert(s.name).second) throw ValidationError("duplicate hyperparameter name " + s.name);
    }
  }

  [[nodiscard]] const std::vector<HyperparameterSpec>& specs() const noexcept { return specs_; }
  [[nodiscard]] std::size_t size() const noexcept { return specs_.size(); }
  [[nodiscard]] const HyperparameterSpec& operator[](std::size_t i) const { return specs_[i]; }

  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (specs_[i].name == name) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const HyperparameterSpace&, const HyperparameterSpace&) = default;

 private:
  std::vector<HyperparameterSpec> specs_;
};

/// Lowercase hex FNV-1a of the assignments rendered in decimal and joined by "|".
inline std::string variant_id(const std::vector<Value>& assignments) {
  std::string canonical;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (i > 0) canonical += '|';
    canonical += render(assignments[i]);
  }
  return to_hex(fnv1a(canonical));
}

/// One full assignment of values to a space's hyperparameters, in spec order.
struct Variant {
  std::string id;
  std::vector<Value> assignments;

  Variant() = default;
  explicit Variant(std::vector<Value> values) : id(variant_id(values)), assignments(std::move(values)) {}

  friend bool operator==(const Variant&, const Variant&) = default;
};

/// Throws ValidationError naming the first hyperparameter whose assignment is out of range.
inline void validate(const HyperparameterSpace& space, const Variant& v) {
  if (v.assignments.size() != space.size()) {
    throw ValidationError("variant has " + std::to_string(v.assignments.size()) + " assignments, space has " +
                          std::to_string(space.size()));
  }
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (!space[i].contains(v.assignments[i])) {
      throw ValidationError("hyperparameter " + space[i].name + ": value " + render(v.assignments[i]) +
                            " outside its valid range");
    }
  }
}

// ---------------------------------------------------------------------------
// Policy family

enum class FeatureMap { identity, l2_normalized };

inline const char* to_string(FeatureMap m) { return m == FeatureMap::identity ? "identity" : "l2_normalized"; }

inline FeatureMap feature_map_from_string(std::string_view s) {
  if (s == "identity") return FeatureMap::identity;
  if (s == "l2_normalized") return FeatureMap::l2_normalized;
  throw ValidationError("unknown feature map \"" + std::string{s} + "\"");
}

/**
 * Linear-softmax policy with exploration floor:
 * p_a = (1 - floor) * softmax(theta . phi(x) / temperature)_a + floor / K.
 */
struct Policy {
  std::size_t num_actions = 2;
  std::size_t dimension = 1;
  std::vector<double> weights;  ///< K x d, row-major.
  double temperature = 1.0;
  double floor = 0.0;
  FeatureMap feature_map = FeatureMap::identity;

  void validate() const {
    if (num_actions < 2) throw ValidationError("policy: K must be >= 2");
    if (dimension < 1) throw ValidationError("policy: d must be >= 1");
    if (weights.size() != num_actions * dimension) throw ValidationError("policy: weights must have K*d entries");
    for (const double w : weights) {
      if (!std::isfinite(w)) throw ValidationError("policy: non-finite weight");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("policy: temperature must be > 0");
    if (!(floor >= 0.0 && floor <= 0.5)) throw ValidationError("policy: floor must lie in [0, 0.5]");
  }

  friend bool operator==(const Policy&, const Policy&) = default;
};

/// Writes phi(x) into `out`. A zero vector maps to itself under l2_normalized.
inline void apply_feature_map(FeatureMap map, std::span<const double> x, std::span<double> out) {
  double scale = 1.0;
  if (map == FeatureMap::l2_normalized) {
    double sq = 0.0;
    for (const double v : x) sq += v * v;
    if (sq > 0.0) scale = 1.0 / std::sqrt(sq);
  }
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * scale;
}

/// Fills `probs` (length K) with pi(.|x).
inline void action_probabilities(const Policy& policy, std::span<const double> context, std::span<double> probs) {
  if (context.size() != policy.dimension) {
    throw ValidationError("context dimension " + std::to_string(context.size()) + " != policy dimension " +
                          std::to_string(policy.dimension));
  }
  for (const double v : context) {
    if (!std::isfinite(v)) throw ValidationError("context has a non-finite entry");
  }
  const std::size_t k = policy.num_actions;
  const std::size_t d = policy.dimension;

  double phi_small[16];
  std::vector<double> phi_large;
  std::span<double> phi;
  if (d <= 16) {
    phi = std::span<double>(phi_small, d);
  } else {
    phi_large.resize(d);
    phi = phi_large;
  }
  apply_feature_map(policy.feature_map, context, phi);

  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < k; ++a) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += policy.weights[a * d + j] * phi[j];
    probs[a] = s / policy.temperature;
    max_score = std::max(max_score, probs[a]);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    probs[a] = std::exp(probs[a] - max_score);
    total += probs[a];
  }
  const double mix = 1.0 - policy.floor;
  const double uniform = policy.floor / static_cast<double>(k);
  for (std::size_t a = 0; a < k; ++a) probs[a] = mix * (probs[a] / total) + uniform;
}

inline std::vector<double> action_probabilities(const Policy& policy, std::span<const double> context) {
  std::vector<double> probs(policy.num_actions);
  action_probabilities(policy, context, probs);
  return probs;
}

// ---------------------------------------------------------------------------
// Builtin space and genome <-> policy mapping

inline std::string weight_gene_name(std::size_t action, std::size_t feature) {
  return "w_" + std::to_string(action) + "_" + std::to_string(feature);
}

inline constexpr double kWeightLo = -5.0;
inline constexpr double kWeightHi = 5.0;

/// K*d weight genes in [-5, 5], temperature in [0.05, 5], floor in [0, 0.5], feature_map categorical.
inline HyperparameterSpace builtin_space(std::size_t d, std::size_t num_actions) {
  if (d < 1) throw ValidationError("builtin_space: d must be >= 1");
  if (num_actions < 2) throw ValidationError("builtin_space: K must be >= 2");
  std::vector<HyperparameterSpec> specs;
  specs.reserve(num_actions * d + 3);
  for (std::size_t a = 0; a < num_actions; ++a) {
    for (std::size_t j = 0; j < d; ++j) {
      specs.push_back(HyperparameterSpec::continuous(weight_gene_name(a, j), kWeightLo, kWeightHi));
    }
  }
  specs.push_back(HyperparameterSpec::continuous("temperature", 0.05, 5.0));
  specs.push_back(HyperparameterSpec::continuous("floor", 0.0, 0.5));
  specs.push_back(HyperparameterSpec::categorical("feature_map", {"identity", "l2_normalized"}));
  return HyperparameterSpace(std::move(specs));
}

namespace detail {

inline std::optional<std::pair<std::size_t, std::size_t>> parse_weight_gene(std::string_view name) {
  if (!name.starts_with("w_")) return std::nullopt;
  name.remove_prefix(2);
  const auto sep = name.find('_');
  if (sep == std::string_view::npos) return std::nullopt;
  std::size_t a = 0;
  std::size_t j = 0;
  const auto a_part = name.substr(0, sep);
  const auto j_part = name.substr(sep + 1);
  if (a_part.empty() || j_part.empty()) return std::nullopt;
  auto ra = std::from_chars(a_part.data(), a_part.data() + a_part.size(), a);
  auto rj = std::from_chars(j_part.data(), j_part.data() + j_part.size(), j);
  if (ra.ec != std::errc{} || ra.ptr != a_part.data() + a_part.size()) return std::nullopt;
  if (rj.ec != std::errc{} || rj.ptr != j_part.data() + j_part.size()) return std::nullopt;
  return std::pair{a, j};
}

inline double numeric(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ValidationError("expected a numeric value, got \"" + std::get<std::string>(v) + "\"");
}

/// Policy shape implied by a space's w_<a>_<j> genes.
struct PolicyLayout {
  std::size_t num_actions = 0;
  std::size_t dimension = 0;
  std::vector<std::size_t> weight_gene;  ///< gene index for weight a*d+j
  std::size_t temperature = 0;
  std::size_t floor = 0;
  std::size_t feature_map = 0;
};

inline PolicyLayout layout_of(const HyperparameterSpace& space) {
  PolicyLayout out;
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::size_t>> found;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (auto aj = parse_weight_gene(space[i].name)) {
      out.num_actions = std::max(out.num_actions, aj->first + 1);
      out.dimension = std::max(out.dimension, aj->second + 1);
      found.emplace_back(*aj, i);
    }
  }
  if (out.num_actions < 2 || out.dimension < 1 || found.size() != out.num_actions * out.dimension) {
    throw ValidationError("space does not declare a complete K x d block of w_<a>_<j> weight genes with K >= 2");
  }
  out.weight_gene.assign(out.num_actions * out.dimension, 0);
  for (const auto& [aj, i] : found) out.weight_gene[aj.first * out.dimension + aj.second] = i;
  auto require = [&](const char* name) {
    auto idx = space.index_of(name);
    if (!idx) throw ValidationError(std::string{"space is missing hyperparameter "} + name);
    return *idx;
  };
  out.temperature = require("temperature");
  out.floor = require("floor");
  out.feature_map = require("feature_map");
  if (space[out.feature_map].kind != ParamKind::categorical) {
    throw ValidationError("hyperparameter feature_map must be categorical");
  }
  return out;
}

}  // namespace detail

/// Builds the policy a variant encodes. Throws ValidationError if any assignment is out of range.
inline Policy decode(const HyperparameterSpace& space, const Variant& variant) {
  validate(space, variant);
  const auto layout = detail::layout_of(space);
  Policy p;
  p.num_actions = layout.num_actions;
  p.dimension = layout.dimension;
  p.weights.resize(layout.weight_gene.size());
  for (std::size_t w = 0; w < layout.weight_gene.size(); ++w) {
    p.weights[w] = detail::numeric(variant.assignments[layout.weight_gene[w]]);
  }
  p.temperature = detail::numeric(variant.assignments[layout.temperature]);
  p.floor = detail::numeric(variant.assignments[layout.floor]);
  p.feature_map = feature_map_from_string(std::get<std::string>(variant.assignments[layout.feature_map]));
  p.validate();
  return p;
}

/// Inverse of decode for spaces that contain only policy genes.
inline Variant encode(const HyperparameterSpace& space, const Policy& policy) {
  policy.validate();
  const auto layout = detail::layout_of(space);
  if (layout.num_actions != policy.num_actions || layout.dimension != policy.dimension) {
    throw ValidationError("policy shape does not match the space");
  }
  if (space.size() != layout.weight_gene.size() + 3) {
    throw ValidationError("encode: space declares genes outside the policy family");
  }
  std::vector<Value> values(space.size());
  for (std::size_t w = 0; w < layout.weight_gene.size(); ++w) values[layout.weight_gene[w]] = policy.weights[w];
  values[layout.temperature] = policy.temperature;
  values[layout.floor] = policy.floor;
  values[layout.feature_map] = std::string{to_string(policy.feature_map)};
  Variant v(std::move(values));
  validate(space, v);
  return v;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const HyperparameterSpec& s) {
  j = nlohmann::json{{"name", s.name}, {"kind", to_string(s.kind)}};
  if (s.kind == ParamKind::categorical) {
    j["values"] = s.values;
  } else if (s.kind == ParamKind::integer) {
    j["range"] = {static_cast<std::int64_t>(s.lo), static_cast<std::int64_t>(s.hi)};
  } else {
    j["range"] = {s.lo, s.hi};
  }
}

inline void from_json(const nlohmann::json& j, HyperparameterSpec& s) {
  s.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    s.kind = ParamKind::categorical;
    s.values.clear();
    for (const auto& v : j.at("values")) s.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  } else if (kind == "continuous" || kind == "integer") {
    s.kind = kind == "continuous" ? ParamKind::continuous : ParamKind::integer;
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw ValidationError("hyperparameter " + s.name + ": range must be [lo, hi]");
    s.lo = r[0].get<double>();
    s.hi = r[1].get<double>();
  } else {
    throw ValidationError("hyperparameter " + s.name + ": unknown kind \"" + kind + "\"");
  }
  s.validate();
}

inline nlohmann::json to_json(const HyperparameterSpace& space) {
  return nlohmann::json{{"specs", space.specs()}};
}

inline HyperparameterSpace space_from_json(const nlohmann::json& j) {
  if (auto b = j.find("builtin"); b != j.end()) {
    return builtin_space(b->at("d").get<std::size_t>(), b->at("K").get<std::size_t>());
  }
  return HyperparameterSpace(j.at("specs").get<std::vector<HyperparameterSpec>>());
}

inline nlohmann::json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

/// Variant as {"id": ..., "assignments": {name: value, ...}}.
inline nlohmann::json to_json(const HyperparameterSpace& space, const Variant& v) {
  nlohmann::json assignments = nlohmann::json::array();
  for (std::size_t i = 0; i < v.assignments.size(); ++i) {
    assignments.push_back({{"name", i < space.size() ? space[i].name : std::string{}}, {"value", value_to_json(v.assignments[i])}});
  }
  return nlohmann::json{{"id", v.id}, {"assignments", assignments}};
}

/// Reads a variant, coercing each value to its spec's kind, and validates it.
inline Variant variant_from_json(const HyperparameterSpace& space, const nlohmann::json& j) {
  const auto& arr = j.at("assignments");
  if (arr.size() != space.size()) throw ValidationError("variant assignment count does not match the space");
  std::vector<Value> values;
  values.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& v = arr[i].at("value");
    switch (space[i].kind) {
      case ParamKind::continuous: values.emplace_back(v.get<double>()); break;
      case ParamKind::integer: values.emplace_back(v.get<std::int64_t>()); break;
      case ParamKind::categorical: values.emplace_back(v.get<std::string>()); break;
    }
  }
  Variant out(std::move(values));
  validate(space, out);
  return out;
}

inline void to_json(nlohmann::json& j, const Policy& p) {
  j = nlohmann::json{{"K", p.num_actions},         {"d", p.dimension},   {"weights", p.weights},
                     {"temperature", p.temperature}, {"floor", p.floor}, {"feature_map", to_string(p.feature_map)}};
}

inline void from_json(const nlohmann::json& j, Policy& p) {
  p.num_actions = j.at("K").get<std::size_t>();
  p.dimension = j.at("d").get<std::size_t>();
  p.weights = j.at("weights").get<std::vector<double>>();
  p.temperature = j.at("temperature").get<double>();
  p.floor = j.at("floor").get<double>();
  p.feature_map = feature_map_from_string(j.value("feature_map", std::string{"identity"}));
  p.validate();
}

}  // namespace offab

#endif  // OFFAB_POLICYSPACE_HPP
