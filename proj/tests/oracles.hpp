#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

// Minimum over every monotone warping path of the summed |a_i - b_j|.
inline double dtw_exhaustive(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  auto walk = [&](auto&& self, std::size_t i, std::size_t j, double cost) -> void {
    cost += std::abs(a[i] - b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < a.size()) self(self, i + 1, j, cost);
    if (j + 1 < b.size()) self(self, i, j + 1, cost);
    if (i + 1 < a.size() && j + 1 < b.size()) self(self, i + 1, j + 1, cost);
  };
  walk(walk, 0, 0, 0.0);
  return best;
}

// Textbook Kruskal over the complete graph given as a dense matrix.
// Returns (total weight, edges as (a, b) with a < b).
inline std::pair<double, std::set<std::pair<std::size_t, std::size_t>>> kruskal(
    const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(w[i][j], i, j);
  std::sort(edges.begin(), edges.end());
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  double total = 0.0;
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  for (const auto& [wt, a, b] : edges) {
    const auto ra = find(a), rb = find(b);
    if (ra == rb) continue;
    parent[ra] = rb;
    total += wt;
    chosen.emplace(a, b);
  }
  return {total, chosen};
}

// DAG edges over bit masks: u -> v iff u is a strict subset of v and no other
// strict subset of v is closer in Hamming distance.
inline std::set<std::pair<std::uint32_t, std::uint32_t>> dag_edges(const std::set<std::uint32_t>& nodes) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (auto v : nodes) {
    int best = 1 << 30;
    for (auto u : nodes)
      if (u != v && (u & v) == u) best = std::min(best, __builtin_popcount(u ^ v));
    for (auto u : nodes)
      if (u != v && (u & v) == u && __builtin_popcount(u ^ v) == best) edges.emplace(u, v);
  }
  return edges;
}

// |X_k|^2 / N by direct summation.
inline std::vector<double> dft_power(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double angle = -2.0L * 3.14159265358979323846264338327950288L * k * t / n;
      re += x[t] * std::cos(angle);
      im += x[t] * std::sin(angle);
    }
    out[k] = static_cast<double>((re * re + im * im) / n);
  }
  return out;
}

// Symmetric matrix with planted groups: intra distances around `intra`,
// inter distances around `inter`, each perturbed by up to `jitter`.
struct PlantedGroups {
  std::vector<std::vector<double>> distances;
  std::vector<int> truth;
};

inline PlantedGroups planted_groups(std::size_t groups, std::size_t per_group, double intra, double inter,
                                    double jitter, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-jitter, jitter);
  const std::size_t n = groups * per_group;
  PlantedGroups g;
  g.distances.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) g.truth.push_back(static_cast<int>(i / per_group));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double base = g.truth[i] == g.truth[j] ? intra : inter;
      g.distances[i][j] = g.distances[j][i] = base + noise(rng);
    }
  return g;
}

}  // namespace oracle
