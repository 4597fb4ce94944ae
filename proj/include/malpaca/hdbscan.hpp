#pragma once

// HDBSCAN over a precomputed distance matrix: core distances, mutual
// reachability, minimum spanning tree, single-linkage hierarchy, condensed
// tree, and Excess-of-Mass cluster selection.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "malpaca/csv.hpp"
#include "malpaca/distance.hpp"
#include "malpaca/error.hpp"

namespace malpaca {

inline constexpr int kNoise = -1;

struct ClusterParams {
  std::size_t min_cluster_size = 7;
  std::size_t k_nearest_neighbors = 7;
};

struct MstEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double weight = 0.0;

  auto key() const { return std::tuple(weight, a, b); }
};

// One row of the condensed tree. Points are ids 0..n-1, condensed clusters
// are ids >= n with n itself the root.
struct CondensedEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

struct ClusterResult {
  std::vector<int> labels;  // cluster id or kNoise
  std::size_t n_clusters = 0;
  std::vector<CondensedEdge> condensed_tree;
  std::vector<double> stabilities;       // per output cluster id
  std::vector<std::size_t> tree_nodes;   // condensed-tree id per output cluster id
  std::vector<MstEdge> mst;
  bool single_cluster_fallback = false;

  std::size_t noise_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
  }
  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(n_clusters, 0);
    for (int l : labels)
      if (l != kNoise) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
  }
  std::vector<std::size_t> members(int cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cluster) out.push_back(i);
    return out;
  }
};

// Distance from each point to its k-th nearest other point.
inline std::vector<double> core_distances(const SquareMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  if (k == 0 || k + 1 > n)
    throw Error(ErrorCode::KTooLarge, "k must be in [1, n-1] (k=" + std::to_string(k) +
                                          ", n=" + std::to_string(n) + ")");
  std::vector<double> core(n);
  std::vector<std::pair<double, std::size_t>> neighbours;
  for (std::size_t p = 0; p < n; ++p) {
    neighbours.clear();
    for (std::size_t q = 0; q < n; ++q)
      if (q != p) neighbours.emplace_back(d(p, q), q);
    std::nth_element(neighbours.begin(), neighbours.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     neighbours.end());
    core[p] = neighbours[k - 1].first;
  }
  return core;
}

inline SquareMatrix mutual_reachability(const SquareMatrix& d, const std::vector<double>& core) {
  const std::size_t n = d.size();
  SquareMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m(i, j) = std::max({core[i], core[j], d(i, j)});
  return m;
}

// Prim's algorithm on the dense graph. Edges compare by (weight, smaller
// endpoint, larger endpoint), a strict total order, so the tree is unique.
// Returned edges are sorted by that order.
inline std::vector<MstEdge> minimum_spanning_tree(const SquareMatrix& w) {
  const std::size_t n = w.size();
  std::vector<MstEdge> tree;
  if (n < 2) return tree;
  std::vector<bool> in_tree(n, false);
  std::vector<MstEdge> best(n);
  std::vector<bool> has_best(n, false);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      MstEdge cand{std::min(current, v), std::max(current, v), w(current, v)};
      if (!has_best[v] || cand.key() < best[v].key()) {
        best[v] = cand;
        has_best[v] = true;
      }
    }
    std::size_t pick = n;
    for (std::size_t v = 0; v < n; ++v)
      if (!in_tree[v] && (pick == n || best[v].key() < best[pick].key())) pick = v;
    in_tree[pick] = true;
    tree.push_back(best[pick]);
    current = pick;
  }
  std::sort(tree.begin(), tree.end(), [](const MstEdge& x, const MstEdge& y) { return x.key() < y.key(); });
  return tree;
}

struct LinkageNode {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

// Single-linkage merges from MST edges (already sorted). Node n + i is the
// i-th merge; the last merge is the root.
inline std::vector<LinkageNode> single_linkage(const std::vector<MstEdge>& mst, std::size_t n) {
  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> size(2 * n - 1, 1);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<LinkageNode> merges;
  merges.reserve(n - 1);
  for (const auto& e : mst) {
    const std::size_t ra = find(e.a), rb = find(e.b);
    const std::size_t id = n + merges.size();
    merges.push_back({ra, rb, e.weight, size[ra] + size[rb]});
    parent[ra] = id;
    parent[rb] = id;
    size[id] = size[ra] + size[rb];
  }
  return merges;
}

namespace detail {

inline std::vector<std::size_t> hierarchy_points(const std::vector<LinkageNode>& merges,
                                                 std::size_t n, std::size_t node) {
  std::vector<std::size_t> points, stack{node};
  while (!stack.empty()) {
    const std::size_t x = stack.back();
    stack.pop_back();
    if (x < n) {
      points.push_back(x);
    } else {
      stack.push_back(merges[x - n].right);
      stack.push_back(merges[x - n].left);
    }
  }
  return points;
}

}  // namespace detail

// Condenses the hierarchy: a split where one side has fewer than
// min_cluster_size points is read as those points leaving the parent.
//
// lambda = 1 / distance. Zero distances (duplicate points) would give an
// infinite lambda; they are clamped to the largest finite lambda of the tree
// (or 1 when every merge is at distance 0) so stabilities remain finite.
inline std::vector<CondensedEdge> condense_tree(const std::vector<LinkageNode>& merges,
                                                std::size_t n, std::size_t min_cluster_size) {
  std::vector<CondensedEdge> out;
  if (n < 2) return out;
  double lambda_cap = 0.0;
  for (const auto& m : merges)
    if (m.distance > 0) lambda_cap = std::max(lambda_cap, 1.0 / m.distance);
  if (lambda_cap == 0.0) lambda_cap = 1.0;
  auto lambda_of = [&](double d) { return d > 0 ? std::min(1.0 / d, lambda_cap) : lambda_cap; };
  auto node_size = [&](std::size_t x) { return x < n ? std::size_t{1} : merges[x - n].size; };

  const std::size_t root = 2 * n - 2;
  std::vector<std::size_t> relabel(2 * n - 1, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::vector<bool> ignore(2 * n - 1, false);

  std::deque<std::size_t> queue{root};
  while (!queue.empty()) {
    const std::size_t node = queue.front();
    queue.pop_front();
    if (node < n) continue;
    const auto& m = merges[node - n];
    queue.push_back(m.left);
    queue.push_back(m.right);
    if (ignore[node]) continue;
    const double lambda = lambda_of(m.distance);
    const std::size_t lsize = node_size(m.left), rsize = node_size(m.right);
    auto fall_out = [&](std::size_t side) {
      for (std::size_t p : detail::hierarchy_points(merges, n, side))
        out.push_back({relabel[node], p, lambda, 1});
      std::vector<std::size_t> stack{side};
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        ignore[x] = true;
        if (x >= n) {
          stack.push_back(merges[x - n].left);
          stack.push_back(merges[x - n].right);
        }
      }
    };
    if (lsize >= min_cluster_size && rsize >= min_cluster_size) {
      relabel[m.left] = next_label++;
      out.push_back({relabel[node], relabel[m.left], lambda, lsize});
      relabel[m.right] = next_label++;
      out.push_back({relabel[node], relabel[m.right], lambda, rsize});
    } else if (lsize < min_cluster_size && rsize < min_cluster_size) {
      fall_out(m.left);
      fall_out(m.right);
    } else if (lsize < min_cluster_size) {
      relabel[m.right] = relabel[node];
      fall_out(m.left);
    } else {
      relabel[m.left] = relabel[node];
      fall_out(m.right);
    }
  }
  return out;
}

// Stability of each condensed cluster: sum over departing points/sub-clusters
// of (lambda_departure - lambda_birth) * size.
inline std::map<std::size_t, double> cluster_stabilities(const std::vector<CondensedEdge>& tree,
                                                         std::size_t n) {
  std::map<std::size_t, double> birth{{n, 0.0}};
  std::map<std::size_t, double> stability{{n, 0.0}};
  for (const auto& e : tree)
    if (e.child >= n) {
      birth[e.child] = e.lambda;
      stability[e.child] = 0.0;
    }
  for (const auto& e : tree)
    stability[e.parent] += (e.lambda - birth[e.parent]) * static_cast<double>(e.child_size);
  return stability;
}

inline ClusterResult cluster(const SquareMatrix& d, const ClusterParams& params) {
  const std::size_t n = d.size();
  if (n < 2) throw Error(ErrorCode::TooFewPoints, "need at least 2 points");
  if (params.min_cluster_size < 2)
    throw Error(ErrorCode::InvalidParams, "min_cluster_size must be >= 2");
  if (params.k_nearest_neighbors == 0)
    throw Error(ErrorCode::InvalidParams, "k_nearest_neighbors must be >= 1");

  const std::size_t k = std::min(params.k_nearest_neighbors, n - 1);
  const auto core = core_distances(d, k);
  const auto reach = mutual_reachability(d, core);

  ClusterResult result;
  result.mst = minimum_spanning_tree(reach);
  const auto merges = single_linkage(result.mst, n);
  result.condensed_tree = condense_tree(merges, n, params.min_cluster_size);
  auto stability = cluster_stabilities(result.condensed_tree, n);

  // Excess of Mass. Children carry larger ids than their parent, so a reverse
  // walk settles every subtree before its parent; the root is not a candidate.
  std::map<std::size_t, std::vector<std::size_t>> children;
  std::map<std::size_t, std::size_t> cluster_parent;
  for (const auto& e : result.condensed_tree)
    if (e.child >= n) {
      children[e.parent].push_back(e.child);
      cluster_parent[e.child] = e.parent;
    }
  std::map<std::size_t, bool> selected;
  std::map<std::size_t, double> best = stability;
  for (auto it = stability.rbegin(); it != stability.rend(); ++it) {
    const std::size_t node = it->first;
    if (node == n) continue;
    double subtree = 0.0;
    for (std::size_t c : children[node]) subtree += best[c];
    if (subtree > best[node]) {
      selected[node] = false;
      best[node] = subtree;
    } else {
      selected[node] = true;
      std::vector<std::size_t> stack(children[node]);
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = false;
        for (std::size_t c : children[x]) stack.push_back(c);
      }
    }
  }

  std::map<std::size_t, std::size_t> point_parent;
  for (const auto& e : result.condensed_tree)
    if (e.child < n) point_parent[e.child] = e.parent;

  std::map<std::size_t, std::vector<std::size_t>> members;  // condensed id -> points
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t c = point_parent.count(p) ? point_parent[p] : n;
    while (c != n && !selected[c]) c = cluster_parent[c];
    if (c != n) members[c].push_back(p);
  }

  result.labels.assign(n, kNoise);
  if (members.empty() && n >= params.min_cluster_size) {
    // No split ever yields two clusters of min_cluster_size points: the whole
    // dataset is reported as one cluster.
    result.single_cluster_fallback = true;
    result.n_clusters = 1;
    std::fill(result.labels.begin(), result.labels.end(), 0);
    result.stabilities = {stability[n]};
    result.tree_nodes = {n};
    return result;
  }

  // Canonical ids: ordered by smallest member index.
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (min member, condensed id)
  for (const auto& [c, pts] : members) order.emplace_back(pts.front(), c);
  std::sort(order.begin(), order.end());
  result.n_clusters = order.size();
  for (std::size_t id = 0; id < order.size(); ++id) {
    const std::size_t c = order[id].second;
    for (std::size_t p : members[c]) result.labels[p] = static_cast<int>(id);
    result.stabilities.push_back(stability[c]);
    result.tree_nodes.push_back(c);
  }
  return result;
}

inline ClusterResult cluster(const DistanceMatrix& d, const ClusterParams& params) {
  return cluster(d.values, params);
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string label_string(int label) { return label == kNoise ? "noise" : std::to_string(label); }

inline void write_clusters_csv(std::ostream& out, const std::vector<std::string>& keys,
                               const ClusterResult& r) {
  csv::write_row(out, {"key", "cluster"});
  for (std::size_t i = 0; i < keys.size(); ++i) csv::write_row(out, {keys[i], label_string(r.labels[i])});
}

// Returns (key, label) pairs in file order.
inline std::vector<std::pair<std::string, int>> read_clusters_csv(std::istream& in) {
  const auto rows = csv::read_rows(in);
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "key")
    throw Error(ErrorCode::MalformedHeader, "clusters csv lacks header");
  std::vector<std::pair<std::string, int>> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) throw Error(ErrorCode::MalformedRecord, "clusters csv row " + std::to_string(i));
    out.emplace_back(rows[i][0], rows[i][1] == "noise" ? kNoise : std::stoi(rows[i][1]));
  }
  return out;
}

inline nlohmann::ordered_json condensed_tree_json(const ClusterResult& r, std::size_t n_points,
                                                  const ClusterParams& params) {
  nlohmann::ordered_json doc;
  doc["n_points"] = n_points;
  doc["min_cluster_size"] = params.min_cluster_size;
  doc["k_nearest_neighbors"] = params.k_nearest_neighbors;
  doc["single_cluster_fallback"] = r.single_cluster_fallback;
  auto& edges = doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : r.condensed_tree)
    edges.push_back({{"parent", e.parent}, {"child", e.child}, {"lambda", e.lambda}, {"child_size", e.child_size}});
  auto& clusters = doc["clusters"] = nlohmann::ordered_json::array();
  const auto sizes = r.cluster_sizes();
  for (std::size_t c = 0; c < r.n_clusters; ++c)
    clusters.push_back({{"id", c}, {"tree_node", r.tree_nodes[c]}, {"size", sizes[c]}, {"stability", r.stabilities[c]}});
  return doc;
}

}  // namespace malpaca
