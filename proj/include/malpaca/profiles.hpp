#pragma once

// Per-sample Cluster Membership Strings (CMS), the behavioral DAG over unique
// CMS values, and agreement statistics between two family labelings.

#include <algorithm>
#include <compare>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "malpaca/capture.hpp"
#include "malpaca/csv.hpp"
#include "malpaca/error.hpp"
#include "malpaca/hdbscan.hpp"

namespace malpaca {

inline const std::string kUnknownFamily = "UNKNOWN";

// Fixed-length bit string; character i of str() is bit i (cluster i).
class Cms {
 public:
  Cms() = default;
  explicit Cms(std::size_t n) : bits_(n, false) {}

  static Cms from_string(const std::string& s) {
    Cms c(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '0' && s[i] != '1') throw Error(ErrorCode::InvalidParams, "CMS must be a 0/1 string: " + s);
      c.bits_[i] = s[i] == '1';
    }
    return c;
  }

  std::size_t size() const { return bits_.size(); }
  bool test(std::size_t i) const { return bits_[i]; }
  void set(std::size_t i) { bits_[i] = true; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true)); }

  bool is_subset_of(const Cms& other) const {
    if (size() != other.size()) throw Error(ErrorCode::LengthMismatch, "CMS lengths differ");
    for (std::size_t i = 0; i < size(); ++i)
      if (bits_[i] && !other.bits_[i]) return false;
    return true;
  }
  bool is_proper_subset_of(const Cms& other) const { return is_subset_of(other) && count() < other.count(); }

  Cms& operator|=(const Cms& other) {
    if (size() != other.size()) throw Error(ErrorCode::LengthMismatch, "CMS lengths differ");
    for (std::size_t i = 0; i < size(); ++i) bits_[i] = bits_[i] || other.bits_[i];
    return *this;
  }

  std::string str() const {
    std::string s(size(), '0');
    for (std::size_t i = 0; i < size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  bool operator==(const Cms&) const = default;
  bool operator<(const Cms& other) const { return bits_ < other.bits_; }

 private:
  std::vector<bool> bits_;
};

inline std::size_t hamming(const Cms& a, const Cms& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "CMS lengths differ");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a.test(i) != b.test(i);
  return d;
}

struct BehavioralProfile {
  std::string sample_id;
  Cms cms;
};

// `keys` is aligned with result.labels.
inline BehavioralProfile build_cms(const std::string& sample_id, const ClusterResult& result,
                                   const std::vector<ConnectionKey>& keys) {
  if (keys.size() != result.labels.size())
    throw Error(ErrorCode::LengthMismatch, "connection keys and labels differ in length");
  BehavioralProfile profile{sample_id, Cms(result.n_clusters)};
  bool seen = false;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].sample_id != sample_id) continue;
    seen = true;
    if (result.labels[i] != kNoise) profile.cms.set(static_cast<std::size_t>(result.labels[i]));
  }
  if (!seen) throw Error(ErrorCode::UnknownSample, sample_id);
  return profile;
}

// One profile per sample present in `keys`, ordered by sample id.
inline std::vector<BehavioralProfile> build_profiles(const ClusterResult& result,
                                                     const std::vector<ConnectionKey>& keys) {
  std::set<std::string> samples;
  for (const auto& k : keys) samples.insert(k.sample_id);
  std::vector<BehavioralProfile> out;
  for (const auto& s : samples) out.push_back(build_cms(s, result, keys));
  return out;
}

inline std::string family_of(const std::map<std::string, std::string>& labels, const std::string& sample) {
  auto it = labels.find(sample);
  return it == labels.end() ? kUnknownFamily : it->second;
}

// ---------------------------------------------------------------------------
// Behavioral DAG

struct BehaviorDag {
  struct Node {
    Cms cms;
    std::map<std::string, std::size_t> families;  // family -> sample count
  };
  std::vector<Node> nodes;  // ordered by (popcount, CMS string)
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // parent -> child, sorted

  std::vector<std::size_t> parents(std::size_t v) const {
    std::vector<std::size_t> out;
    for (const auto& [u, w] : edges)
      if (w == v) out.push_back(u);
    return out;
  }
  std::vector<std::size_t> roots() const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < nodes.size(); ++v)
      if (parents(v).empty()) out.push_back(v);
    return out;
  }
};

// Parents of v: the strict-subset nodes at minimum Hamming distance from v.
inline BehaviorDag build_dag(const std::vector<BehavioralProfile>& profiles,
                             const std::map<std::string, std::string>& family_labels = {}) {
  BehaviorDag dag;
  if (profiles.empty()) return dag;
  const std::size_t width = profiles.front().cms.size();
  std::map<Cms, std::map<std::string, std::size_t>> unique;
  for (const auto& p : profiles) {
    if (p.cms.size() != width) throw Error(ErrorCode::LengthMismatch, "CMS lengths differ");
    ++unique[p.cms][family_of(family_labels, p.sample_id)];
  }
  for (auto& [cms, fams] : unique) dag.nodes.push_back({cms, std::move(fams)});
  std::sort(dag.nodes.begin(), dag.nodes.end(), [](const auto& a, const auto& b) {
    return std::pair(a.cms.count(), a.cms.str()) < std::pair(b.cms.count(), b.cms.str());
  });

  for (std::size_t v = 0; v < dag.nodes.size(); ++v) {
    std::size_t best = width + 1;
    std::vector<std::size_t> parents;
    for (std::size_t u = 0; u < dag.nodes.size(); ++u) {
      if (!dag.nodes[u].cms.is_proper_subset_of(dag.nodes[v].cms)) continue;
      const std::size_t h = hamming(dag.nodes[u].cms, dag.nodes[v].cms);
      if (h < best) {
        best = h;
        parents.clear();
      }
      if (h == best) parents.push_back(u);
    }
    for (std::size_t u : parents) dag.edges.emplace_back(u, v);
  }
  std::sort(dag.edges.begin(), dag.edges.end());
  return dag;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline void write_dot(std::ostream& out, const BehaviorDag& dag) {
  out << "digraph behaviors {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n";
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    std::string label = dag.nodes[i].cms.str();
    std::string fams;
    for (const auto& [fam, count] : dag.nodes[i].families) {
      if (!fams.empty()) fams += ' ';
      fams += fam + "(" + std::to_string(count) + ")";
    }
    out << "  n" << i << " [label=\"" << dot_escape(label) << "\\n" << dot_escape(fams) << "\"];\n";
  }
  for (const auto& [u, v] : dag.edges) out << "  n" << u << " -> n" << v << ";\n";
  out << "}\n";
}

// ---------------------------------------------------------------------------
// Profile / label files

inline void write_profiles_csv(std::ostream& out, const std::vector<BehavioralProfile>& profiles,
                               const std::map<std::string, std::string>& family_labels) {
  csv::write_row(out, {"sample_id", "cms", "family_label"});
  for (const auto& p : profiles) csv::write_row(out, {p.sample_id, p.cms.str(), family_of(family_labels, p.sample_id)});
}

struct ProfileTable {
  std::vector<BehavioralProfile> profiles;
  std::map<std::string, std::string> family_labels;
};

inline ProfileTable read_profiles_csv(std::istream& in) {
  const auto rows = csv::read_rows(in);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "sample_id")
    throw Error(ErrorCode::MalformedHeader, "profiles csv lacks header");
  ProfileTable t;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) throw Error(ErrorCode::MalformedRecord, "profiles csv row " + std::to_string(i));
    t.profiles.push_back({rows[i][0], Cms::from_string(rows[i][1])});
    if (rows[i].size() >= 3) t.family_labels[rows[i][0]] = rows[i][2];
  }
  return t;
}

// Two-column CSV (id, label); a header row whose second field is "label" is skipped.
inline std::map<std::string, std::string> read_label_csv(std::istream& in) {
  std::map<std::string, std::string> labels;
  const auto rows = csv::read_rows(in);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() < 2) throw Error(ErrorCode::MalformedRecord, "label csv row " + std::to_string(i + 1));
    if (i == 0 && rows[i][1] == "label") continue;
    labels[rows[i][0]] = rows[i][1];
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Label agreement

struct AgreementReport {
  std::map<std::pair<std::string, std::string>, std::size_t> crosstab;  // (label_a, label_b) -> samples
  std::map<std::string, std::size_t> distinct_for_a;  // label_a -> distinct counterpart labels in b
  std::map<std::string, std::size_t> distinct_for_b;
  double mean_distinct_a = 0.0;
  double mean_distinct_b = 0.0;
  std::size_t overlap = 0;
  std::size_t only_a = 0;
  std::size_t only_b = 0;
};

inline AgreementReport label_agreement(const std::map<std::string, std::string>& a,
                                       const std::map<std::string, std::string>& b) {
  AgreementReport r;
  std::map<std::string, std::set<std::string>> partners_a, partners_b;
  for (const auto& [sample, la] : a) {
    auto it = b.find(sample);
    if (it == b.end()) {
      ++r.only_a;
      continue;
    }
    ++r.overlap;
    ++r.crosstab[{la, it->second}];
    partners_a[la].insert(it->second);
    partners_b[it->second].insert(la);
  }
  for (const auto& [sample, lb] : b)
    if (!a.contains(sample)) ++r.only_b;
  auto summarize = [](const auto& partners, auto& distinct, double& mean) {
    double total = 0;
    for (const auto& [label, set] : partners) {
      distinct[label] = set.size();
      total += static_cast<double>(set.size());
    }
    mean = partners.empty() ? 0.0 : total / static_cast<double>(partners.size());
  };
  summarize(partners_a, r.distinct_for_a, r.mean_distinct_a);
  summarize(partners_b, r.distinct_for_b, r.mean_distinct_b);
  return r;
}

// Cross-tabulation: header "label_a\label_b,<b labels...>", one row per a label.
inline void write_agreement_csv(std::ostream& out, const AgreementReport& r) {
  std::set<std::string> la, lb;
  for (const auto& [k, _] : r.crosstab) {
    la.insert(k.first);
    lb.insert(k.second);
  }
  std::vector<std::string> header{"label_a\\label_b"};
  header.insert(header.end(), lb.begin(), lb.end());
  csv::write_row(out, header);
  for (const auto& a : la) {
    std::vector<std::string> row{a};
    for (const auto& b : lb) {
      auto it = r.crosstab.find({a, b});
      row.push_back(std::to_string(it == r.crosstab.end() ? 0 : it->second));
    }
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Composite family profiles

struct FamilyClusterTable {
  std::vector<std::string> families;  // sorted
  std::vector<Cms> presence;          // union of member CMSs, aligned with families
  std::vector<std::size_t> cluster_counts;
};

inline FamilyClusterTable family_cluster_matrix(const std::vector<BehavioralProfile>& profiles,
                                                const std::map<std::string, std::string>& family_labels) {
  std::map<std::string, Cms> unions;
  for (const auto& p : profiles) {
    auto [it, inserted] = unions.try_emplace(family_of(family_labels, p.sample_id), p.cms.size());
    it->second |= p.cms;
  }
  FamilyClusterTable t;
  for (auto& [fam, cms] : unions) {
    t.families.push_back(fam);
    t.cluster_counts.push_back(cms.count());
    t.presence.push_back(std::move(cms));
  }
  return t;
}

inline void write_family_matrix_csv(std::ostream& out, const FamilyClusterTable& t) {
  const std::size_t width = t.presence.empty() ? 0 : t.presence.front().size();
  std::vector<std::string> header{"family"};
  for (std::size_t c = 0; c < width; ++c) header.push_back("c" + std::to_string(c));
  header.push_back("n_clusters");
  csv::write_row(out, header);
  for (std::size_t i = 0; i < t.families.size(); ++i) {
    std::vector<std::string> row{t.families[i]};
    for (std::size_t c = 0; c < width; ++c) row.push_back(t.presence[i].test(c) ? "1" : "0");
    row.push_back(std::to_string(t.cluster_counts[i]));
    csv::write_row(out, row);
  }
}

}  // namespace malpaca
