#pragma once

// Pairwise connection distances: DTW on packet sizes and inter-arrival times,
// cosine on port n-gram profiles, averaged into one matrix.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "malpaca/capture.hpp"
#include "malpaca/csv.hpp"
#include "malpaca/error.hpp"
#include "malpaca/features.hpp"

namespace malpaca {

// Dense row-major n x n matrix of doubles.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

enum class Feature : std::size_t { PacketSize = 0, Interval = 1, SourcePort = 2, DestPort = 3 };

inline constexpr std::array<Feature, 4> kAllFeatures = {Feature::PacketSize, Feature::Interval,
                                                        Feature::SourcePort, Feature::DestPort};

inline const char* to_string(Feature f) {
  switch (f) {
    case Feature::PacketSize: return "packet_size";
    case Feature::Interval: return "interval";
    case Feature::SourcePort: return "source_port";
    case Feature::DestPort: return "dest_port";
  }
  return "?";
}

// Subset of the four features used in the combined distance (ablations).
struct FeatureSet {
  std::array<bool, 4> enabled{true, true, true, true};

  bool has(Feature f) const { return enabled[static_cast<std::size_t>(f)]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(enabled.begin(), enabled.end(), true)); }

  // Parses a comma list drawn from {ps, in, sp, dp}.
  static FeatureSet parse(std::string_view list) {
    FeatureSet set;
    set.enabled.fill(false);
    std::size_t start = 0;
    while (start <= list.size()) {
      auto end = list.find(',', start);
      if (end == std::string_view::npos) end = list.size();
      const auto tok = list.substr(start, end - start);
      if (tok == "ps") set.enabled[0] = true;
      else if (tok == "in") set.enabled[1] = true;
      else if (tok == "sp") set.enabled[2] = true;
      else if (tok == "dp") set.enabled[3] = true;
      else throw Error(ErrorCode::InvalidParams, "unknown feature '" + std::string(tok) + "'");
      start = end + 1;
    }
    if (set.count() == 0) throw Error(ErrorCode::InvalidParams, "empty feature set");
    return set;
  }

  std::string str() const {
    static constexpr std::array<const char*, 4> names{"ps", "in", "sp", "dp"};
    std::string out;
    for (std::size_t i = 0; i < 4; ++i) {
      if (!enabled[i]) continue;
      if (!out.empty()) out += ',';
      out += names[i];
    }
    return out;
  }
};

struct DistanceMatrix {
  std::vector<std::string> keys;
  SquareMatrix values;
  // Indexed by Feature; present only when retained.
  std::array<std::optional<SquareMatrix>, 4> components;

  std::size_t size() const { return values.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

// ---------------------------------------------------------------------------
// Elementary distances

// Unconstrained DTW with |a_i - b_j| local cost; cost accumulates only along the
// optimal warping path.
inline double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySequence, "dtw on empty sequence");
  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  prev[0] = std::abs(a[0] - b[0]);
  for (std::size_t j = 1; j < m; ++j) prev[j] = prev[j - 1] + std::abs(a[0] - b[j]);
  for (std::size_t i = 1; i < a.size(); ++i) {
    cur[0] = prev[0] + std::abs(a[i] - b[0]);
    for (std::size_t j = 1; j < m; ++j)
      cur[j] = std::abs(a[i] - b[j]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

// Min-max over off-diagonal pairs; a constant matrix maps to all zeros.
inline SquareMatrix normalize_matrix(const SquareMatrix& raw) {
  const std::size_t n = raw.size();
  SquareMatrix out(n);
  if (n < 2) return out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      lo = std::min(lo, raw(i, j));
      hi = std::max(hi, raw(i, j));
    }
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = (raw(i, j) - lo) / range;
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

namespace detail {
inline double cosine_from(double dot, double norm_u, double norm_v) {
  if (norm_u == 0.0 || norm_v == 0.0) return 1.0;  // zero profile: maximally distant
  return std::clamp(1.0 - dot / (norm_u * norm_v), 0.0, 1.0);
}
}  // namespace detail

inline double cosine_distance(const NgramProfile& u, const NgramProfile& v) {
  if (u.counts.size() != v.counts.size())
    throw Error(ErrorCode::LengthMismatch, "profiles differ in length");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.counts.size(); ++i) {
    const double a = u.counts[i], b = v.counts[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  return detail::cosine_from(dot, std::sqrt(uu), std::sqrt(vv));
}

inline double cosine_distance(const SparseProfile& u, const SparseProfile& v) {
  double dot = 0.0;
  auto a = u.entries.begin();
  auto b = v.entries.begin();
  while (a != u.entries.end() && b != v.entries.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      dot += static_cast<double>(a->second) * b->second;
      ++a;
      ++b;
    }
  }
  return detail::cosine_from(dot, u.norm, v.norm);
}

// ---------------------------------------------------------------------------
// Matrix construction

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Evaluates fn(i, j) for every i < j and stores it symmetrically. Rows are handed
// out through an atomic counter; every value lands at its own index, so the
// result does not depend on scheduling.
template <typename PairFn>
SquareMatrix pairwise_matrix(std::size_t n, unsigned workers, PairFn&& fn) {
  SquareMatrix out(n);
  std::atomic<std::size_t> next_row{0};
  auto work = [&] {
    for (std::size_t i = next_row++; i < n; i = next_row++)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = fn(i, j);
        out(i, j) = v;
        out(j, i) = v;
      }
  };
  workers = std::max(1u, workers);
  if (workers == 1 || n < 3) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  pool.clear();  // joins
  return out;
}

struct DistanceOptions {
  FeatureSet features;
  unsigned workers = 1;
  bool retain_components = false;
};

struct PortVocabularies {
  NgramVocabulary source;
  NgramVocabulary destination;
};

inline PortVocabularies build_port_vocabularies(std::span<const Connection> connections,
                                                std::size_t order) {
  std::vector<std::vector<Port>> src, dst;
  src.reserve(connections.size());
  dst.reserve(connections.size());
  for (const auto& c : connections) {
    src.push_back(c.src_ports);
    dst.push_back(c.dst_ports);
  }
  return {build_vocabulary(src, order), build_vocabulary(dst, order)};
}

inline std::vector<std::string> connection_keys(std::span<const Connection> connections) {
  std::vector<std::string> keys;
  keys.reserve(connections.size());
  for (const auto& c : connections) keys.push_back(c.key.str());
  return keys;
}

// Final averaged distance over the enabled features. DTW components are
// min-max normalized independently once all raw values exist.
inline DistanceMatrix combined_matrix(std::span<const Connection> connections,
                                      const PortVocabularies& vocab,
                                      const DistanceOptions& options = {}) {
  const std::size_t n = connections.size();
  if (n < 2) throw Error(ErrorCode::TooFewConnections, "need at least 2 connections");
  const auto& feats = options.features;
  if (feats.count() == 0) throw Error(ErrorCode::InvalidParams, "empty feature set");

  DistanceMatrix result;
  result.keys = connection_keys(connections);

  std::array<std::optional<SquareMatrix>, 4> parts;
  if (feats.has(Feature::PacketSize))
    parts[0] = normalize_matrix(pairwise_matrix(n, options.workers, [&](std::size_t i, std::size_t j) {
      return dtw_distance(connections[i].packet_sizes, connections[j].packet_sizes);
    }));
  if (feats.has(Feature::Interval))
    parts[1] = normalize_matrix(pairwise_matrix(n, options.workers, [&](std::size_t i, std::size_t j) {
      return dtw_distance(connections[i].intervals_ms, connections[j].intervals_ms);
    }));
  auto cosine_part = [&](const NgramVocabulary& v, auto member) {
    std::vector<SparseProfile> profiles;
    profiles.reserve(n);
    for (const auto& c : connections) profiles.push_back(sparse_profile(c.*member, v));
    return pairwise_matrix(n, options.workers, [&](std::size_t i, std::size_t j) {
      return cosine_distance(profiles[i], profiles[j]);
    });
  };
  if (feats.has(Feature::SourcePort)) parts[2] = cosine_part(vocab.source, &Connection::src_ports);
  if (feats.has(Feature::DestPort)) parts[3] = cosine_part(vocab.destination, &Connection::dst_ports);

  const double divisor = static_cast<double>(feats.count());
  result.values = SquareMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (const auto& p : parts)
        if (p) sum += (*p)(i, j);
      const double v = sum / divisor;
      result.values(i, j) = v;
      result.values(j, i) = v;
    }
  if (options.retain_components) result.components = std::move(parts);
  return result;
}

// Statistical baseline: each feature min-max scaled across the dataset, then
// Euclidean distance divided by 2 so values stay within [0, 1].
inline DistanceMatrix baseline_matrix(std::span<const BaselineFeatures> features,
                                      std::vector<std::string> keys) {
  const std::size_t n = features.size();
  if (n < 2) throw Error(ErrorCode::TooFewConnections, "need at least 2 connections");
  std::vector<std::array<double, 4>> scaled(n);
  for (std::size_t f = 0; f < 4; ++f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& x : features) {
      lo = std::min(lo, x.as_array()[f]);
      hi = std::max(hi, x.as_array()[f]);
    }
    for (std::size_t i = 0; i < n; ++i)
      scaled[i][f] = hi > lo ? (features[i].as_array()[f] - lo) / (hi - lo) : 0.0;
  }
  DistanceMatrix result;
  result.keys = std::move(keys);
  result.values = pairwise_matrix(n, 1, [&](std::size_t i, std::size_t j) {
    double sq = 0.0;
    for (std::size_t f = 0; f < 4; ++f) sq += (scaled[i][f] - scaled[j][f]) * (scaled[i][f] - scaled[j][f]);
    return std::sqrt(sq) / 2.0;
  });
  return result;
}

// ---------------------------------------------------------------------------
// CSV: header row "key,<k0>,<k1>,...", then one row per connection.

inline void write_distance_csv(std::ostream& out, const DistanceMatrix& m) {
  std::vector<std::string> header{"key"};
  header.insert(header.end(), m.keys.begin(), m.keys.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> row{m.keys[i]};
    for (double v : m.values.row(i)) row.push_back(csv::real(v));
    csv::write_row(out, row);
  }
}

inline DistanceMatrix read_distance_csv(std::istream& in) {
  const auto rows = csv::read_rows(in);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "key")
    throw Error(ErrorCode::MalformedHeader, "distance csv lacks a key header");
  DistanceMatrix m;
  m.keys.assign(rows[0].begin() + 1, rows[0].end());
  const std::size_t n = m.keys.size();
  if (rows.size() != n + 1)
    throw Error(ErrorCode::MalformedRecord, "distance csv row count differs from header");
  m.values = SquareMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    if (row.size() != n + 1 || row[0] != m.keys[i])
      throw Error(ErrorCode::MalformedRecord, "distance csv row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < n; ++j) m.values(i, j) = std::stod(row[j + 1]);
  }
  return m;
}

}  // namespace malpaca
