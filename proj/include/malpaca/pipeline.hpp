#pragma once

// End-to-end run: ingest -> connections -> distances -> clusters -> profiles,
// DAG, heatmaps and reports, each stage serialized into the output directory.

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "malpaca/capture.hpp"
#include "malpaca/csv.hpp"
#include "malpaca/distance.hpp"
#include "malpaca/error.hpp"
#include "malpaca/features.hpp"
#include "malpaca/hdbscan.hpp"
#include "malpaca/profiles.hpp"
#include "malpaca/report.hpp"

namespace malpaca {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::vector<fs::path> inputs;  // files or directories
  fs::path out = "malpaca-out";
  std::size_t len = 20;
  std::optional<std::size_t> min_len;  // defaults to len
  std::size_t order = 3;
  ClusterParams cluster;
  FeatureSet features;
  bool baseline = false;
  double bin_width = 1.0;  // seconds
  std::set<std::string> localhost;
  std::optional<fs::path> family_labels;
  std::optional<fs::path> capability_labels;
  unsigned workers = default_workers();
  bool reuse_distances = false;

  std::size_t effective_min_len() const { return min_len.value_or(len); }
};

inline std::set<std::string> split_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::InvalidParams, "not a boolean: " + v);
}

// Applies one `key = value` setting. Keys mirror the command-line flags.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "input") cfg.inputs.emplace_back(value);
    else if (key == "out") cfg.out = value;
    else if (key == "len") cfg.len = std::stoul(value);
    else if (key == "min_len" || key == "min-len") cfg.min_len = std::stoul(value);
    else if (key == "order") cfg.order = std::stoul(value);
    else if (key == "min_cluster_size" || key == "min-cluster-size") cfg.cluster.min_cluster_size = std::stoul(value);
    else if (key == "k") cfg.cluster.k_nearest_neighbors = std::stoul(value);
    else if (key == "features") cfg.features = FeatureSet::parse(value);
    else if (key == "baseline") cfg.baseline = parse_bool(value);
    else if (key == "bin_width" || key == "bin-width") cfg.bin_width = std::stod(value);
    else if (key == "localhost") cfg.localhost = split_list(value);
    else if (key == "family_labels" || key == "family-labels") cfg.family_labels = value;
    else if (key == "capability_labels" || key == "capability-labels") cfg.capability_labels = value;
    else if (key == "workers") cfg.workers = static_cast<unsigned>(std::stoul(value));
    else throw Error(ErrorCode::InvalidParams, "unknown config key '" + key + "'");
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidParams, "bad value for '" + key + "': " + value);
  }
}

// Plain-text `key = value` lines; '#' starts a comment.
inline void load_config_file(const fs::path& path, PipelineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidParams, "config line without '=': " + line);
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

// Capture files under the configured inputs, sorted by path.
inline std::vector<fs::path> collect_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  auto is_capture = [](const fs::path& p) {
    const auto ext = p.extension();
    return ext == ".pcap" || ext == ".cap" || ext == ".jsonl";
  };
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::directory_iterator(in))
        if (entry.is_regular_file() && is_capture(entry.path())) files.push_back(entry.path());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw Error(ErrorCode::UnreadableFile, in.string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// connections.csv

inline void write_connections_csv(std::ostream& out, const std::vector<Connection>& conns) {
  csv::write_row(out, {"key", "sample_id", "src_ip", "dst_ip", "direction", "original_length", "length",
                       "packet_sizes", "intervals_ms", "src_ports", "dst_ports", "timestamps_us"});
  for (const auto& c : conns)
    csv::write_row(out, {c.key.str(), c.key.sample_id, c.key.src_ip, c.key.dst_ip, to_string(c.direction),
                         std::to_string(c.original_length), std::to_string(c.length()), csv::join(c.packet_sizes),
                         csv::join(c.intervals_ms), csv::join(c.src_ports), csv::join(c.dst_ports),
                         csv::join(c.timestamps_us)});
}

inline std::vector<Connection> read_connections_csv(std::istream& in) {
  const auto rows = csv::read_rows(in);
  if (rows.empty() || rows[0].size() != 12 || rows[0][0] != "key")
    throw Error(ErrorCode::MalformedHeader, "connections csv lacks header");
  auto numbers = [](const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (ss >> tok) v.push_back(std::stod(tok));
    return v;
  };
  std::vector<Connection> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 12) throw Error(ErrorCode::MalformedRecord, "connections csv row " + std::to_string(i));
    Connection c;
    c.key = {r[1], r[2], r[3]};
    c.direction = r[4] == "Out" ? Direction::Outgoing : Direction::Incoming;
    c.original_length = std::stoul(r[5]);
    c.packet_sizes = numbers(r[7]);
    c.intervals_ms = numbers(r[8]);
    for (double p : numbers(r[9])) c.src_ports.push_back(static_cast<Port>(p));
    for (double p : numbers(r[10])) c.dst_ports.push_back(static_cast<Port>(p));
    std::stringstream ts(r[11]);
    std::int64_t t;
    while (ts >> t) c.timestamps_us.push_back(t);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct PipelineSummary {
  std::size_t files = 0;
  std::size_t packets = 0;
  std::size_t non_ip_skipped = 0;
  std::size_t malformed_records = 0;
  std::size_t portless_packets = 0;
  ExtractionStats extraction;
  std::size_t n_clusters = 0;
  std::size_t noise = 0;
  double mean_ce_rate = 0.0;
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::PipelineFailure, "cannot write " + p.string());
  return out;
}

inline std::map<std::string, std::string> load_labels(const std::optional<fs::path>& p) {
  if (!p) return {};
  std::ifstream in(*p);
  if (!in) throw Error(ErrorCode::UnreadableFile, p->string());
  return read_label_csv(in);
}

inline std::map<int, std::string> load_capabilities(const std::optional<fs::path>& p) {
  if (!p) return {};
  std::ifstream in(*p);
  if (!in) throw Error(ErrorCode::UnreadableFile, p->string());
  return read_capability_labels(in);
}

}  // namespace detail

// Writes every heatmap of the clustering into `dir`.
inline void render_heatmaps(const fs::path& dir, const std::vector<Connection>& conns, const ClusterResult& result) {
  fs::create_directories(dir);
  const auto bands = BandAssignment::fit(conns);
  for (std::size_t c = 0; c < result.n_clusters; ++c) {
    const auto members = result.members(static_cast<int>(c));
    for (Feature f : kAllFeatures) {
      auto out = detail::open_out(dir / heatmap_file_name(static_cast<int>(c), f));
      out << render_heatmap(make_heatmap_spec(static_cast<int>(c), f, members, conns, bands));
    }
  }
}

inline ClusterResult cluster_result_from_labels(const std::vector<int>& labels) {
  ClusterResult r;
  r.labels = labels;
  int max_label = kNoise;
  for (int l : labels) max_label = std::max(max_label, l);
  r.n_clusters = static_cast<std::size_t>(max_label + 1);
  return r;
}

inline DistanceMatrix compute_distances(const std::vector<Connection>& conns, const PipelineConfig& cfg) {
  if (cfg.baseline) {
    std::vector<BaselineFeatures> feats;
    feats.reserve(conns.size());
    for (const auto& c : conns) feats.push_back(baseline_features(c, cfg.bin_width));
    return baseline_matrix(feats, connection_keys(conns));
  }
  const auto vocab = build_port_vocabularies(conns, cfg.order);
  return combined_matrix(conns, vocab, {cfg.features, cfg.workers, false});
}

inline nlohmann::ordered_json config_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["len"] = cfg.len;
  j["min_len"] = cfg.effective_min_len();
  j["order"] = cfg.order;
  j["min_cluster_size"] = cfg.cluster.min_cluster_size;
  j["k_nearest_neighbors"] = cfg.cluster.k_nearest_neighbors;
  j["features"] = cfg.features.str();
  j["baseline"] = cfg.baseline;
  j["bin_width"] = cfg.bin_width;
  j["localhost"] = cfg.localhost;
  j["family_labels"] = cfg.family_labels ? cfg.family_labels->filename().string() : "";
  j["capability_labels"] = cfg.capability_labels ? cfg.capability_labels->filename().string() : "";
  return j;
}

// Runs every stage, writing artifacts as each completes. Throws Error on the
// first failing stage; earlier artifacts stay on disk.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg) {
  PipelineSummary summary;
  fs::create_directories(cfg.out);
  const auto files = collect_inputs(cfg.inputs);
  summary.files = files.size();

  nlohmann::ordered_json manifest;
  manifest["config"] = config_json(cfg);
  auto& inputs = manifest["inputs"] = nlohmann::ordered_json::array();

  std::vector<PacketRecord> packets;
  for (const auto& f : files) {
    auto report = parse_capture(f);
    summary.non_ip_skipped += report.non_ip_skipped;
    summary.malformed_records += report.malformed.size();
    summary.portless_packets += report.portless;
    inputs.push_back({{"file", f.filename().string()},
                      {"sha256", sha256_file(f)},
                      {"packets", report.packets.size()},
                      {"non_ip_skipped", report.non_ip_skipped},
                      {"malformed_records", report.malformed.size()}});
    packets.insert(packets.end(), std::make_move_iterator(report.packets.begin()),
                   std::make_move_iterator(report.packets.end()));
  }
  summary.packets = packets.size();

  auto extraction = extract_connections(packets, cfg.len, cfg.effective_min_len(), cfg.localhost);
  summary.extraction = extraction.stats;
  const auto& conns = extraction.connections;
  auto write_manifest = [&] {
    const auto& s = summary.extraction;
    manifest["counts"] = {{"files", summary.files},
                          {"ip_packets", summary.packets},
                          {"non_ip_skipped", summary.non_ip_skipped},
                          {"malformed_records", summary.malformed_records},
                          {"portless_packets", summary.portless_packets},
                          {"connections_kept", s.kept_connections},
                          {"connections_discarded_short", s.discarded_connections},
                          {"packets_in_discarded_connections", s.discarded_packets},
                          {"packets_truncated", s.truncated_packets},
                          {"clusters", summary.n_clusters},
                          {"noise", summary.noise},
                          {"mean_ce_rate", summary.mean_ce_rate}};
    auto out = detail::open_out(cfg.out / "manifest.json");
    out << manifest.dump(2) << '\n';
  };
  if (conns.size() < 2) {
    write_manifest();
    throw Error(ErrorCode::PipelineFailure, "no usable connections");
  }
  {
    auto out = detail::open_out(cfg.out / "connections.csv");
    write_connections_csv(out, conns);
  }

  const auto keys = connection_keys(conns);
  std::optional<DistanceMatrix> distances;
  if (cfg.reuse_distances && fs::exists(cfg.out / "distances.csv")) {
    std::ifstream in(cfg.out / "distances.csv");
    auto cached = read_distance_csv(in);
    if (cached.keys == keys) distances = std::move(cached);
  }
  if (!distances) {
    distances = compute_distances(conns, cfg);
    auto out = detail::open_out(cfg.out / "distances.csv");
    write_distance_csv(out, *distances);
  }

  const auto result = cluster(*distances, cfg.cluster);
  summary.n_clusters = result.n_clusters;
  summary.noise = result.noise_count();
  {
    auto out = detail::open_out(cfg.out / "clusters.csv");
    write_clusters_csv(out, keys, result);
    auto tree = detail::open_out(cfg.out / "condensed_tree.json");
    tree << condensed_tree_json(result, conns.size(), cfg.cluster).dump(2) << '\n';
  }

  const auto families = detail::load_labels(cfg.family_labels);
  std::vector<ConnectionKey> conn_keys;
  for (const auto& c : conns) conn_keys.push_back(c.key);
  const auto profiles = build_profiles(result, conn_keys);
  {
    auto out = detail::open_out(cfg.out / "profiles.csv");
    write_profiles_csv(out, profiles, families);
    auto dot = detail::open_out(cfg.out / "dag.dot");
    write_dot(dot, build_dag(profiles, families));
    auto fam = detail::open_out(cfg.out / "family_profiles.csv");
    write_family_matrix_csv(fam, family_cluster_matrix(profiles, families));
  }
  if (!families.empty()) {
    std::map<std::string, std::string> by_profile;
    for (const auto& p : profiles) by_profile[p.sample_id] = p.cms.str();
    auto out = detail::open_out(cfg.out / "agreement.csv");
    write_agreement_csv(out, label_agreement(families, by_profile));
  }

  render_heatmaps(cfg.out / "heatmaps", conns, result);

  const auto capabilities = detail::load_capabilities(cfg.capability_labels);
  const auto rows = cluster_summary(result, conns, families, capabilities);
  {
    auto out = detail::open_out(cfg.out / "summary.csv");
    write_summary_csv(out, rows);
    auto txt = detail::open_out(cfg.out / "summary.txt");
    write_summary_text(txt, rows, result.noise_count());
  }

  const auto bands = BandAssignment::fit(conns);
  std::vector<BandedConnection> banded;
  banded.reserve(conns.size());
  for (const auto& c : conns) banded.push_back(bands.banded(c));
  const auto quality = quality_report(result, distances->values, banded);
  summary.mean_ce_rate = quality.mean_error_rate;
  {
    auto out = detail::open_out(cfg.out / "quality_report.csv");
    write_quality_csv(out, quality);
  }
  write_manifest();
  return summary;
}

struct BaselineComparison {
  PipelineSummary sequential;
  PipelineSummary baseline;
  double difference() const { return baseline.mean_ce_rate - sequential.mean_ce_rate; }
};

// Runs the sequential and the statistical-baseline pipelines into
// <out>/sequential and <out>/baseline and writes <out>/comparison.csv.
inline BaselineComparison run_baseline_comparison(const PipelineConfig& cfg) {
  BaselineComparison cmp;
  PipelineConfig seq = cfg;
  seq.baseline = false;
  seq.out = cfg.out / "sequential";
  PipelineConfig base = cfg;
  base.baseline = true;
  base.out = cfg.out / "baseline";
  cmp.sequential = run_pipeline(seq);
  cmp.baseline = run_pipeline(base);
  auto out = detail::open_out(cfg.out / "comparison.csv");
  csv::write_row(out, {"mode", "clusters", "noise", "mean_ce_rate"});
  for (const auto& [name, s] : {std::pair{"sequential", cmp.sequential}, std::pair{"baseline", cmp.baseline}})
    csv::write_row(out, {name, std::to_string(s.n_clusters), std::to_string(s.noise), csv::real(s.mean_ce_rate)});
  csv::write_row(out, {"difference", "", "", csv::real(cmp.difference())});
  return cmp;
}

}  // namespace malpaca
