#pragma once

// Temporal heatmaps per cluster (SVG), automated clustering-error estimate
// and cluster summary tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "malpaca/capture.hpp"
#include "malpaca/csv.hpp"
#include "malpaca/distance.hpp"
#include "malpaca/error.hpp"
#include "malpaca/hdbscan.hpp"
#include "malpaca/profiles.hpp"

namespace malpaca {

inline constexpr std::size_t kBands = 10;

inline std::vector<double> feature_values(const Connection& c, Feature f) {
  switch (f) {
    case Feature::PacketSize: return c.packet_sizes;
    case Feature::Interval: return c.intervals_ms;
    case Feature::SourcePort: return {c.src_ports.begin(), c.src_ports.end()};
    case Feature::DestPort: return {c.dst_ports.begin(), c.dst_ports.end()};
  }
  return {};
}

// Decile banding of one feature's dataset-wide distribution. Sizes and
// intervals are banded on log1p values, ports on raw values.
struct BandScale {
  bool log_scaled = false;
  std::array<double, kBands - 1> edges{};  // in transformed units

  double transform(double raw) const { return log_scaled ? std::log1p(raw) : raw; }
  double inverse(double t) const { return log_scaled ? std::expm1(t) : t; }

  // Number of edges strictly below the value, i.e. 0..9.
  int band(double raw) const {
    const double t = transform(raw);
    return static_cast<int>(std::lower_bound(edges.begin(), edges.end(), t) - edges.begin());
  }

  static BandScale fit(std::vector<double> raw, bool log_scaled) {
    BandScale s;
    s.log_scaled = log_scaled;
    if (raw.empty()) return s;
    for (double& v : raw) v = s.transform(v);
    std::sort(raw.begin(), raw.end());
    const double last = static_cast<double>(raw.size() - 1);
    for (std::size_t q = 1; q < kBands; ++q) {
      const double h = last * static_cast<double>(q) / kBands;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, raw.size() - 1);
      s.edges[q - 1] = raw[lo] + (h - static_cast<double>(lo)) * (raw[hi] - raw[lo]);
    }
    return s;
  }
};

struct BandAssignment {
  std::array<BandScale, 4> scales;

  const BandScale& operator[](Feature f) const { return scales[static_cast<std::size_t>(f)]; }

  static BandAssignment fit(std::span<const Connection> connections) {
    BandAssignment b;
    for (Feature f : kAllFeatures) {
      std::vector<double> all;
      for (const auto& c : connections) {
        const auto v = feature_values(c, f);
        all.insert(all.end(), v.begin(), v.end());
      }
      const bool log_scaled = f == Feature::PacketSize || f == Feature::Interval;
      b.scales[static_cast<std::size_t>(f)] = BandScale::fit(std::move(all), log_scaled);
    }
    return b;
  }

  std::vector<int> banded(const Connection& c, Feature f) const {
    std::vector<int> out;
    for (double v : feature_values(c, f)) out.push_back((*this)[f].band(v));
    return out;
  }

  std::array<std::vector<int>, 4> banded(const Connection& c) const {
    return {banded(c, Feature::PacketSize), banded(c, Feature::Interval),
            banded(c, Feature::SourcePort), banded(c, Feature::DestPort)};
  }
};

// ---------------------------------------------------------------------------
// Heatmaps

struct HeatmapRow {
  std::string key;
  std::vector<double> values;
};

struct HeatmapSpec {
  int cluster_id = 0;
  Feature feature = Feature::PacketSize;
  std::vector<HeatmapRow> rows;  // ordered by key
  BandScale color_scale;
};

inline HeatmapSpec make_heatmap_spec(int cluster_id, Feature feature, std::span<const std::size_t> members,
                                     std::span<const Connection> connections, const BandAssignment& bands) {
  HeatmapSpec spec{cluster_id, feature, {}, bands[feature]};
  for (std::size_t m : members) spec.rows.push_back({connections[m].key.str(), feature_values(connections[m], feature)});
  std::sort(spec.rows.begin(), spec.rows.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return spec;
}

inline constexpr std::array<const char*, kBands> kBandColors = {
    "#440154", "#482878", "#3e4989", "#31688e", "#26828e",
    "#1f9e89", "#35b779", "#6ece58", "#b5de2b", "#fde725"};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string render_heatmap(const HeatmapSpec& spec) {
  if (spec.rows.empty()) throw Error(ErrorCode::EmptyCluster, fmt::format("cluster {} has no rows", spec.cluster_id));
  constexpr int cell = 14, title_h = 28, header_h = 14, legend_row = 16, pad = 8;
  std::size_t columns = 0, label_chars = 0;
  for (const auto& r : spec.rows) {
    columns = std::max(columns, r.values.size());
    label_chars = std::max(label_chars, r.key.size());
  }
  const int label_w = static_cast<int>(label_chars) * 7 + pad;
  const int grid_top = title_h + header_h;
  const int grid_h = static_cast<int>(spec.rows.size()) * cell;
  const int legend_top = grid_top + grid_h + pad + 12;
  const int width = std::max(label_w + static_cast<int>(columns) * cell + pad, 320);
  const int height = legend_top + static_cast<int>(kBands) * legend_row + pad;

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"monospace\" font-size=\"11\">\n",
      width, height);
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", width, height);
  svg += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"13\">cluster {} / {} ({} connections)</text>\n", pad,
                     spec.cluster_id, to_string(spec.feature), spec.rows.size());
  for (std::size_t j = 0; j < columns; j += 5)
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\">{}</text>\n", label_w + static_cast<int>(j) * cell,
                       grid_top - 3, j);
  for (std::size_t i = 0; i < spec.rows.size(); ++i) {
    const int y = grid_top + static_cast<int>(i) * cell;
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", pad / 2, y + cell - 3, xml_escape(spec.rows[i].key));
    for (std::size_t j = 0; j < spec.rows[i].values.size(); ++j) {
      const double v = spec.rows[i].values[j];
      const int band = spec.color_scale.band(v);
      svg += fmt::format(
          "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{}</title></rect>\n",
          label_w + static_cast<int>(j) * cell, y, cell, cell, kBandColors[static_cast<std::size_t>(band)], v);
    }
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\">legend ({})</text>\n", pad, legend_top - 4,
                     spec.color_scale.log_scaled ? "log1p deciles" : "deciles");
  const auto& e = spec.color_scale.edges;
  for (std::size_t b = 0; b < kBands; ++b) {
    const int y = legend_top + static_cast<int>(b) * legend_row;
    std::string range;
    if (b == 0)
      range = fmt::format("<= {:.6g}", spec.color_scale.inverse(e[0]));
    else if (b == kBands - 1)
      range = fmt::format("> {:.6g}", spec.color_scale.inverse(e[kBands - 2]));
    else
      range = fmt::format("({:.6g}, {:.6g}]", spec.color_scale.inverse(e[b - 1]), spec.color_scale.inverse(e[b]));
    svg += fmt::format("<rect class=\"legend\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", pad, y,
                       cell, cell - 2, kBandColors[b]);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">band {}: {}</text>\n", pad + cell + 6, y + cell - 4, b,
                       xml_escape(range));
  }
  svg += "</svg>\n";
  return svg;
}

inline std::string heatmap_file_name(int cluster_id, Feature f) {
  return fmt::format("cluster{}_{}.svg", cluster_id, to_string(f));
}

// ---------------------------------------------------------------------------
// Clustering-error estimate

struct CeEstimate {
  std::vector<bool> owner;  // aligned with the member list
  std::vector<bool> ce;
  std::size_t ce_count = 0;
  double error_rate = 0.0;
};

using BandedConnection = std::array<std::vector<int>, 4>;

namespace detail {

// Positionwise majority band over the owners; ties go to the lower band.
inline std::vector<int> majority_bands(const std::vector<const std::vector<int>*>& seqs) {
  std::size_t len = 0;
  for (const auto* s : seqs) len = std::max(len, s->size());
  std::vector<int> out(len);
  for (std::size_t p = 0; p < len; ++p) {
    std::array<int, kBands> votes{};
    for (const auto* s : seqs)
      if (p < s->size()) ++votes[static_cast<std::size_t>((*s)[p])];
    out[p] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

// More than half of the compared positions carry a different band. Positions
// present on one side only count as different.
inline bool sequence_differs(const std::vector<int>& seq, const std::vector<int>& reference) {
  const std::size_t len = std::max(seq.size(), reference.size());
  if (len == 0) return false;
  std::size_t diff = 0;
  for (std::size_t p = 0; p < len; ++p)
    if (p >= seq.size() || p >= reference.size() || seq[p] != reference[p]) ++diff;
  return 2 * diff > len;
}

}  // namespace detail

// `members` index into `distances` and `banded`. Rightful owners are all
// members of the pair(s) at minimum mutual distance; a non-owner is a
// clustering error when more than two of its four features differ from them.
inline CeEstimate estimate_clustering_errors(std::span<const std::size_t> members, const SquareMatrix& distances,
                                             std::span<const BandedConnection> banded) {
  const std::size_t n = members.size();
  if (n < 2) throw Error(ErrorCode::ClusterTooSmall, "need at least 2 connections");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) best = std::min(best, distances(members[a], members[b]));

  CeEstimate est;
  est.owner.assign(n, false);
  est.ce.assign(n, false);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (distances(members[a], members[b]) == best) est.owner[a] = est.owner[b] = true;

  std::array<std::vector<int>, 4> reference;
  for (std::size_t f = 0; f < 4; ++f) {
    std::vector<const std::vector<int>*> seqs;
    for (std::size_t a = 0; a < n; ++a)
      if (est.owner[a]) seqs.push_back(&banded[members[a]][f]);
    reference[f] = detail::majority_bands(seqs);
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (est.owner[a]) continue;
    int differing = 0;
    for (std::size_t f = 0; f < 4; ++f) differing += detail::sequence_differs(banded[members[a]][f], reference[f]);
    if (differing > 2) {
      est.ce[a] = true;
      ++est.ce_count;
    }
  }
  est.error_rate = static_cast<double>(est.ce_count) / static_cast<double>(n);
  return est;
}

struct ClusterQualityReport {
  struct Row {
    int cluster = 0;
    std::size_t size = 0;
    std::size_t ce_count = 0;
    double error_rate = 0.0;
  };
  std::vector<Row> rows;
  double mean_error_rate = 0.0;
};

inline ClusterQualityReport quality_report(const ClusterResult& result, const SquareMatrix& distances,
                                           std::span<const BandedConnection> banded) {
  ClusterQualityReport report;
  double total = 0.0;
  for (std::size_t c = 0; c < result.n_clusters; ++c) {
    const auto members = result.members(static_cast<int>(c));
    ClusterQualityReport::Row row{static_cast<int>(c), members.size(), 0, 0.0};
    if (members.size() >= 2) {
      const auto est = estimate_clustering_errors(members, distances, banded);
      row.ce_count = est.ce_count;
      row.error_rate = est.error_rate;
    }
    total += row.error_rate;
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) report.mean_error_rate = total / static_cast<double>(report.rows.size());
  return report;
}

inline void write_quality_csv(std::ostream& out, const ClusterQualityReport& r) {
  csv::write_row(out, {"cluster", "size", "ce_count", "error_rate"});
  for (const auto& row : r.rows)
    csv::write_row(out, {std::to_string(row.cluster), std::to_string(row.size), std::to_string(row.ce_count),
                         csv::real(row.error_rate)});
  csv::write_row(out, {"mean", "", "", csv::real(r.mean_error_rate)});
}

// ---------------------------------------------------------------------------
// Cluster summary

struct ClusterSummaryRow {
  int cluster = 0;
  std::size_t connections = 0;
  std::size_t families = 0;
  std::string capability = "unlabeled";
  Direction direction = Direction::Outgoing;  // majority; ties resolve to Outgoing
};

inline std::vector<ClusterSummaryRow> cluster_summary(const ClusterResult& result,
                                                      std::span<const Connection> connections,
                                                      const std::map<std::string, std::string>& family_labels,
                                                      const std::map<int, std::string>& capability_labels) {
  std::vector<ClusterSummaryRow> rows;
  for (std::size_t c = 0; c < result.n_clusters; ++c) {
    ClusterSummaryRow row;
    row.cluster = static_cast<int>(c);
    std::set<std::string> fams;
    std::size_t out = 0;
    for (std::size_t m : result.members(row.cluster)) {
      ++row.connections;
      fams.insert(family_of(family_labels, connections[m].key.sample_id));
      out += connections[m].direction == Direction::Outgoing;
    }
    row.families = fams.size();
    row.direction = 2 * out >= row.connections ? Direction::Outgoing : Direction::Incoming;
    if (auto it = capability_labels.find(row.cluster); it != capability_labels.end()) row.capability = it->second;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::map<int, std::string> read_capability_labels(std::istream& in) {
  std::map<int, std::string> out;
  for (const auto& [id, label] : read_label_csv(in)) {
    if (id == "cluster_id") continue;
    out[std::stoi(id)] = label;
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<ClusterSummaryRow>& rows) {
  csv::write_row(out, {"cluster", "connections", "families", "capability", "direction"});
  for (const auto& r : rows)
    csv::write_row(out, {std::to_string(r.cluster), std::to_string(r.connections), std::to_string(r.families),
                         r.capability, to_string(r.direction)});
}

inline void write_summary_text(std::ostream& out, const std::vector<ClusterSummaryRow>& rows, std::size_t noise) {
  out << fmt::format("{:>8} {:>12} {:>9} {:>4}  {}\n", "cluster", "connections", "families", "dir", "capability");
  for (const auto& r : rows)
    out << fmt::format("{:>8} {:>12} {:>9} {:>4}  {}\n", r.cluster, r.connections, r.families,
                       to_string(r.direction), r.capability);
  out << fmt::format("{} clusters, {} noise connections\n", rows.size(), noise);
}

}  // namespace malpaca
