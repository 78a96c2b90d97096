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

#ifndef OFFAB_LOGSTORE_HPP
#define OFFAB_LOGSTORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "offab/error.hpp"
#include "offab/rng.hpp"

/**
 * \file
 * \brief Logged bandit feedback: records, JSON Lines ingestion and evaluation windows.
 *
 * A log file starts with a header line `{"d": <int>, "K": <int>}` followed by one record per line,
 * `{"t": <int>, "x": [<float>...], "a": <int>, "p": <float>, "r": <float>}`.
 */

namespace offab {

/// One logged interaction.
struct LogRecord {
  std::int64_t timestamp = 0;   ///< Milliseconds since epoch.
  std::vector<double> context;  ///< Features, dimension d.
  std::size_t action = 0;       ///< Chosen action in [0, K).
  double propensity = 1.0;      ///< Logging probability of `action`, in (0, 1].
  double reward = 0.0;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// An immutable, validated, timestamp-ordered collection of records.
class LogDataset {
 public:
  LogDataset(std::size_t d, std::size_t num_actions) : d_(d), num_actions_(num_actions) {
    if (d_ < 1) throw ValidationError("context dimension d must be >= 1");
    if (num_actions_ < 2) throw ValidationError("action count K must be >= 2");
  }

  /// Validates every record and stable-sorts by timestamp.
  LogDataset(std::size_t d, std::size_t num_actions, std::vector<LogRecord> records)
      : LogDataset(d, num_actions) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (auto problem = check(records[i])) {
        throw ValidationError("record " + std::to_string(i) + ": " + *problem);
      }
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const LogRecord& a, const LogRecord& b) { return a.timestamp < b.timestamp; });
    records_ = std::move(records);
  }

  [[nodiscard]] std::size_t dimension() const noexcept { return d_; }
  [[nodiscard]] std::size_t num_actions() const noexcept { return num_actions_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
  [[nodiscard]] const std::vector<LogRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const LogRecord& operator[](std::size_t i) const { return records_[i]; }
  [[nodiscard]] auto begin() const noexcept { return records_.begin(); }
  [[nodiscard]] auto end() const noexcept { return records_.end(); }

  /// Returns a description of the first invariant `r` violates, if any.
  [[nodiscard]] std::optional<std::string> check(const LogRecord& r) const {
    if (r.context.size() != d_) {
      return "context dimension " + std::to_string(r.context.size()) + " != declared d " + std::to_string(d_);
    }
    for (const double x : r.context) {
      if (!std::isfinite(x)) return std::string{"non-finite context entry"};
    }
    if (r.action >= num_actions_) {
      return "action " + std::to_string(r.action) + " >= declared K " + std::to_string(num_actions_);
    }
    if (!(r.propensity > 0.0)) return std::string{"propensity must be > 0"};
    if (!(r.propensity <= 1.0)) return std::string{"propensity must be <= 1"};
    if (!std::isfinite(r.reward)) return std::string{"reward must be finite"};
    return std::nullopt;
  }

  friend bool operator==(const LogDataset&, const LogDataset&) = default;

 private:
  std::size_t d_;
  std::size_t num_actions_;
  std::vector<LogRecord> records_;
};

// ---------------------------------------------------------------------------
// Serialization

inline std::string header_line(std::size_t d, std::size_t num_actions) {
  return "{\"d\": " + std::to_string(d) + ", \"K\": " + std::to_string(num_actions) + "}";
}

inline std::string record_line(const LogRecord& r) {
  std::string out = "{\"t\": " + std::to_string(r.timestamp) + ", \"x\": [";
  for (std::size_t j = 0; j < r.context.size(); ++j) {
    if (j > 0) out += ", ";
    out += nlohmann::json(r.context[j]).dump();
  }
  out += "], \"a\": " + std::to_string(r.action);
  out += ", \"p\": " + nlohmann::json(r.propensity).dump();
  out += ", \"r\": " + nlohmann::json(r.reward).dump() + "}";
  return out;
}

inline void write_records(std::ostream& out, const std::vector<LogRecord>& records) {
  for (const auto& r : records) out << record_line(r) << '\n';
}

inline void write_dataset(std::ostream& out, const LogDataset& ds) {
  out << header_line(ds.dimension(), ds.num_actions()) << '\n';
  write_records(out, ds.records());
}

inline void write_dataset(const std::string& path, const LogDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_dataset(out, ds);
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Ingestion

namespace detail {

inline std::int64_t json_int(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string{"missing field \""} + key + "\"");
  if (!it->is_number_integer()) throw ValidationError(std::string{"field \""} + key + "\" must be an integer");
  return it->get<std::int64_t>();
}

inline double json_real(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string{"missing field \""} + key + "\"");
  if (!it->is_number()) throw ValidationError(std::string{"field \""} + key + "\" must be a number");
  return it->get<double>();
}

inline LogRecord parse_record(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  LogRecord r;
  r.timestamp = json_int(j, "t");
  auto x = j.find("x");
  if (x == j.end() || !x->is_array()) throw ValidationError("field \"x\" must be an array");
  r.context.reserve(x->size());
  for (const auto& v : *x) {
    if (!v.is_number()) throw ValidationError("context entries must be numbers");
    r.context.push_back(v.get<double>());
  }
  const auto a = json_int(j, "a");
  if (a < 0) throw ValidationError("action must be >= 0");
  r.action = static_cast<std::size_t>(a);
  r.propensity = json_real(j, "p");
  r.reward = json_real(j, "r");
  return r;
}

}  // namespace detail

/// Reads a log stream. `source` names the stream in diagnostics. Blank lines are skipped.
inline LogDataset ingest(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::pair<std::size_t, std::size_t>> shape;
  while (!shape && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto d = detail::json_int(j, "d");
      const auto k = detail::json_int(j, "K");
      if (d < 1) throw ValidationError("d must be >= 1");
      if (k < 2) throw ValidationError("K must be >= 2");
      shape.emplace(static_cast<std::size_t>(d), static_cast<std::size_t>(k));
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(source, line_no, std::string{"malformed header: "} + e.what());
    } catch (const ValidationError& e) {
      throw IngestError(source, line_no, std::string{"bad header: "} + e.what());
    }
  }
  if (!shape) throw IngestError(source, line_no, "missing header line {\"d\": <int>, \"K\": <int>}");

  LogDataset probe(shape->first, shape->second);
  std::vector<LogRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LogRecord r;
    try {
      r = detail::parse_record(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(source, line_no, std::string{"malformed record: "} + e.what());
    } catch (const ValidationError& e) {
      throw IngestError(source, line_no, e.what());
    }
    if (auto problem = probe.check(r)) throw IngestError(source, line_no, *problem);
    records.push_back(std::move(r));
  }
  return LogDataset(shape->first, shape->second, std::move(records));
}

inline LogDataset ingest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open log file " + path);
  return ingest(in, path);
}

// ---------------------------------------------------------------------------
// Windows

enum class WindowStrategy { last_n, time_range, shuffled_sample };

/// Selects the evaluation window D_k out of the accumulated log.
struct WindowSpec {
  WindowStrategy strategy = WindowStrategy::last_n;
  std::size_t n = 1000;         ///< last_n, shuffled_sample
  std::int64_t t_start = 0;     ///< time_range, inclusive
  std::int64_t t_end = 0;       ///< time_range, exclusive
  std::uint64_t seed = 0;       ///< shuffled_sample

  static WindowSpec last(std::size_t n) { return {WindowStrategy::last_n, n, 0, 0, 0}; }
  static WindowSpec range(std::int64_t start, std::int64_t end) { return {WindowStrategy::time_range, 0, start, end, 0}; }
  static WindowSpec shuffled(std::size_t n, std::uint64_t seed) { return {WindowStrategy::shuffled_sample, n, 0, 0, seed}; }

  void validate() const {
    if (strategy == WindowStrategy::time_range) {
      if (!(t_start < t_end)) throw ValidationError("window: t_start must be < t_end");
    } else if (n < 1) {
      throw ValidationError("window: n must be >= 1");
    }
  }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

inline LogDataset select_window(const LogDataset& dataset, const WindowSpec& spec) {
  spec.validate();
  const auto& all = dataset.records();
  std::vector<LogRecord> out;
  switch (spec.strategy) {
    case WindowStrategy::last_n: {
      const std::size_t take = std::min(spec.n, all.size());
      out.assign(all.end() - static_cast<std::ptrdiff_t>(take), all.end());
      break;
    }
    case WindowStrategy::time_range: {
      const auto lo = std::lower_bound(all.begin(), all.end(), spec.t_start,
                                       [](const LogRecord& r, std::int64_t t) { return r.timestamp < t; });
      const auto hi = std::lower_bound(lo, all.end(), spec.t_end,
                                       [](const LogRecord& r, std::int64_t t) { return r.timestamp < t; });
      out.assign(lo, hi);
      break;
    }
    case WindowStrategy::shuffled_sample: {
      // Partial Fisher-Yates over indices; sorting the chosen indices restores timestamp order.
      std::vector<std::size_t> idx(all.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      const std::size_t take = std::min(spec.n, all.size());
      Rng rng(spec.seed);
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
      }
      idx.resize(take);
      std::sort(idx.begin(), idx.end());
      out.reserve(take);
      for (const auto i : idx) out.push_back(all[i]);
      break;
    }
  }
  return LogDataset(dataset.dimension(), dataset.num_actions(), std::move(out));
}

/// First `count` records, i.e. the log as it stood after `count` appends.
inline LogDataset prefix(const LogDataset& dataset, std::size_t count) {
  const auto& all = dataset.records();
  count = std::min(count, all.size());
  return LogDataset(dataset.dimension(), dataset.num_actions(),
                    std::vector<LogRecord>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count)));
}

/// Summary identifying a window's contents.
struct WindowDigest {
  std::size_t count = 0;
  std::optional<std::int64_t> t_min;
  std::optional<std::int64_t> t_max;
  std::string content_hash;  ///< FNV-1a over the serialized header and records.

  friend bool operator==(const WindowDigest&, const WindowDigest&) = default;
};

inline WindowDigest digest(const LogDataset& ds) {
  WindowDigest dg;
  dg.count = ds.size();
  Fnv1a h;
  h.update(header_line(ds.dimension(), ds.num_actions()));
  h.update("\n");
  for (const auto& r : ds) {
    h.update(record_line(r));
    h.update("\n");
  }
  dg.content_hash = to_hex(h.digest());
  if (!ds.empty()) {
    dg.t_min = ds.records().front().timestamp;
    dg.t_max = ds.records().back().timestamp;
  }
  return dg;
}

// ---------------------------------------------------------------------------
// JSON

inline const char* to_string(WindowStrategy s) {
  switch (s) {
    case WindowStrategy::last_n: return "last_n";
    case WindowStrategy::time_range: return "time_range";
    case WindowStrategy::shuffled_sample: return "shuffled_sample";
  }
  return "?";
}

inline void to_json(nlohmann::json& j, const WindowSpec& w) {
  j = nlohmann::json{{"strategy", to_string(w.strategy)}};
  if (w.strategy == WindowStrategy::time_range) {
    j["t_start"] = w.t_start;
    j["t_end"] = w.t_end;
  } else {
    j["n"] = w.n;
  }
  if (w.strategy == WindowStrategy::shuffled_sample) j["seed"] = w.seed;
}

inline void from_json(const nlohmann::json& j, WindowSpec& w) {
  const auto s = j.at("strategy").get<std::string>();
  if (s == "last_n") {
    w = WindowSpec::last(j.at("n").get<std::size_t>());
  } else if (s == "time_range") {
    w = WindowSpec::range(j.at("t_start").get<std::int64_t>(), j.at("t_end").get<std::int64_t>());
  } else if (s == "shuffled_sample") {
    w = WindowSpec::shuffled(j.at("n").get<std::size_t>(), j.value("seed", std::uint64_t{0}));
  } else {
    throw ValidationError("unknown window strategy \"" + s + "\"");
  }
  w.validate();
}

inline void to_json(nlohmann::json& j, const WindowDigest& d) {
  j = nlohmann::json{{"count", d.count}, {"content_hash", d.content_hash}};
  j["t_min"] = d.t_min ? nlohmann::json(*d.t_min) : nlohmann::json(nullptr);
  j["t_max"] = d.t_max ? nlohmann::json(*d.t_max) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, WindowDigest& d) {
  d.count = j.at("count").get<std::size_t>();
  d.content_hash = j.at("content_hash").get<std::string>();
  d.t_min = j.at("t_min").is_null() ? std::nullopt : std::optional<std::int64_t>(j.at("t_min").get<std::int64_t>());
  d.t_max = j.at("t_max").is_null() ? std::nullopt : std::optional<std::int64_t>(j.at("t_max").get<std::int64_t>());
}

}  // namespace offab

#endif  // OFFAB_LOGSTORE_HPP
