#pragma once

// Synthetic packet streams with planted, labeled behaviors.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "malpaca/capture.hpp"
#include "malpaca/csv.hpp"
#include "malpaca/error.hpp"

namespace malpaca {

enum class BehaviorKind {
  SystematicPortScan,
  RandomizedPortScan,
  PeriodicHeartbeat,
  BroadcastDiscovery,
  ConnectionSpam,
  BulkTransfer,
};

inline constexpr std::array<BehaviorKind, 6> kAllBehaviors = {
    BehaviorKind::SystematicPortScan, BehaviorKind::RandomizedPortScan, BehaviorKind::PeriodicHeartbeat,
    BehaviorKind::BroadcastDiscovery, BehaviorKind::ConnectionSpam,     BehaviorKind::BulkTransfer};

inline const char* to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::SystematicPortScan: return "systematic_port_scan";
    case BehaviorKind::RandomizedPortScan: return "randomized_port_scan";
    case BehaviorKind::PeriodicHeartbeat: return "periodic_heartbeat";
    case BehaviorKind::BroadcastDiscovery: return "broadcast_discovery";
    case BehaviorKind::ConnectionSpam: return "connection_spam";
    case BehaviorKind::BulkTransfer: return "bulk_transfer";
  }
  return "?";
}

inline std::optional<BehaviorKind> parse_behavior(std::string_view name) {
  for (auto k : kAllBehaviors)
    if (name == to_string(k)) return k;
  return std::nullopt;
}

inline constexpr const char* kSynthLocalhost = "10.0.0.1";

struct BehaviorSpec {
  BehaviorKind kind = BehaviorKind::PeriodicHeartbeat;
  Port port_lo = 0;  // destination port range for scans
  Port port_hi = 0;
  Port src_port = 0;
  Port dst_port = 0;  // fixed destination port for non-scan kinds
  double period_ms = 1000.0;
  double jitter = 0.0;  // fraction of the period, [0, 0.5]
  std::uint32_t size = 100;
  std::uint32_t size_jitter = 0;  // bytes, symmetric

  static BehaviorSpec defaults(BehaviorKind kind) {
    switch (kind) {
      case BehaviorKind::SystematicPortScan: return {kind, 1000, 1999, 54321, 0, 5.0, 0.1, 44, 0};
      case BehaviorKind::RandomizedPortScan: return {kind, 1, 1024, 61000, 0, 20.0, 0.2, 60, 0};
      case BehaviorKind::PeriodicHeartbeat: return {kind, 0, 0, 50000, 8080, 1000.0, 0.05, 120, 0};
      case BehaviorKind::BroadcastDiscovery: return {kind, 0, 0, 1900, 1900, 3000.0, 0.1, 165, 10};
      case BehaviorKind::ConnectionSpam: return {kind, 0, 0, 45000, 25, 1.0, 0.3, 60, 4};
      case BehaviorKind::BulkTransfer: return {kind, 0, 0, 443, 52000, 2.0, 0.3, 1450, 50};
    }
    return {};
  }
};

struct SynthTrace {
  std::vector<PacketRecord> packets;
  std::vector<std::pair<ConnectionKey, BehaviorKind>> truth;

  void append(SynthTrace other) {
    packets.insert(packets.end(), std::make_move_iterator(other.packets.begin()),
                   std::make_move_iterator(other.packets.end()));
    truth.insert(truth.end(), other.truth.begin(), other.truth.end());
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Explicit draws from mt19937_64 output keep streams identical across
// standard libraries (the std distributions are implementation-defined).
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }  // [0, 1)
  double symmetric() { return 2.0 * uniform() - 1.0; }                            // [-1, 1)
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace detail

// Packets of `n_connections` connections of one behavior. Each connection
// has its own RNG stream derived from (seed, kind, index), so output does not
// depend on generation order.
inline SynthTrace generate(const BehaviorSpec& spec, std::size_t n_connections, std::size_t len, std::uint64_t seed) {
  if (len < 2) throw Error(ErrorCode::InvalidParams, "len must be >= 2");
  if (!(spec.jitter >= 0.0 && spec.jitter <= 0.5)) throw Error(ErrorCode::InvalidParams, "jitter must be in [0, 0.5]");
  if (!(spec.period_ms > 0)) throw Error(ErrorCode::InvalidParams, "period must be > 0");
  const bool scan = spec.kind == BehaviorKind::SystematicPortScan || spec.kind == BehaviorKind::RandomizedPortScan;
  if (scan && spec.port_lo > spec.port_hi) throw Error(ErrorCode::InvalidParams, "empty port range");
  if (spec.size_jitter > spec.size) throw Error(ErrorCode::InvalidParams, "size jitter exceeds size");

  const auto kind_index = static_cast<std::uint64_t>(spec.kind);
  const bool incoming = spec.kind == BehaviorKind::BulkTransfer;
  const bool broadcast = spec.kind == BehaviorKind::BroadcastDiscovery;
  const std::size_t per_sample = broadcast ? 1 : 5;
  const std::uint64_t range = scan ? static_cast<std::uint64_t>(spec.port_hi - spec.port_lo) + 1 : 1;

  SynthTrace trace;
  for (std::size_t i = 0; i < n_connections; ++i) {
    detail::SynthRng rng(detail::splitmix64(seed ^ detail::splitmix64((kind_index << 32) ^ i)));
    const std::string sample = fmt::format("{}-{:03d}", to_string(spec.kind), i / per_sample);
    const std::string remote =
        broadcast ? "239.255.255.250" : fmt::format("198.{}.{}.{}", 18 + kind_index, (i / 250) % 250, i % 250 + 1);
    ConnectionKey key{sample, incoming ? remote : kSynthLocalhost, incoming ? kSynthLocalhost : remote};
    trace.truth.emplace_back(key, spec.kind);

    const std::size_t count = len + rng.below(3);
    std::int64_t t = 1'600'000'000'000'000LL + static_cast<std::int64_t>(kind_index) * 1'000'000'000'000LL +
                     static_cast<std::int64_t>(i) * 600'000'000LL;
    for (std::size_t j = 0; j < count; ++j) {
      if (j > 0) t += std::llround(spec.period_ms * 1000.0 * (1.0 + spec.jitter * rng.symmetric()));
      PacketRecord p;
      p.timestamp_us = t;
      p.src_ip = key.src_ip;
      p.dst_ip = key.dst_ip;
      p.sample_id = sample;
      p.src_port = spec.src_port;
      switch (spec.kind) {
        case BehaviorKind::SystematicPortScan: p.dst_port = static_cast<Port>(spec.port_lo + j % range); break;
        case BehaviorKind::RandomizedPortScan: p.dst_port = static_cast<Port>(spec.port_lo + rng.below(range)); break;
        default: p.dst_port = spec.dst_port;
      }
      const auto spread = static_cast<std::uint64_t>(spec.size_jitter) * 2 + 1;
      p.ip_size = spec.size - spec.size_jitter + static_cast<std::uint32_t>(rng.below(spread));
      trace.packets.push_back(std::move(p));
    }
  }
  return trace;
}

// Concatenation of `n_per_kind` connections of every listed kind with defaults.
inline SynthTrace generate_fixture(std::span<const BehaviorKind> kinds, std::size_t n_per_kind, std::size_t len,
                                   std::uint64_t seed) {
  SynthTrace all;
  for (auto k : kinds) all.append(generate(BehaviorSpec::defaults(k), n_per_kind, len, seed));
  return all;
}

inline void write_ground_truth_csv(std::ostream& out, const SynthTrace& trace) {
  csv::write_row(out, {"key", "kind"});
  for (const auto& [key, kind] : trace.truth) csv::write_row(out, {key.str(), to_string(kind)});
}

// One jsonl file per sample id (file stem = sample id) plus ground_truth.csv.
inline void write_trace_directory(const std::filesystem::path& dir, const SynthTrace& trace) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::vector<PacketRecord>> by_sample;
  for (const auto& p : trace.packets) by_sample[p.sample_id].push_back(p);
  for (const auto& [sample, packets] : by_sample) {
    std::ofstream out(dir / (sample + ".jsonl"));
    if (!out) throw Error(ErrorCode::UnreadableFile, (dir / (sample + ".jsonl")).string());
    write_jsonl(out, packets);
  }
  std::ofstream truth(dir / "ground_truth.csv");
  write_ground_truth_csv(truth, trace);
}

}  // namespace malpaca
