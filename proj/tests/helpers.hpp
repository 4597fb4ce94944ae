#pragma once

// Small constructors shared by the test binaries.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "malpaca/capture.hpp"

namespace testing_support {

inline malpaca::Connection make_connection(std::string name, std::vector<double> sizes, std::vector<double> intervals,
                                           std::vector<malpaca::Port> src, std::vector<malpaca::Port> dst) {
  malpaca::Connection c;
  c.key = {std::move(name), "10.0.0.1", "192.0.2.1"};
  c.packet_sizes = std::move(sizes);
  c.intervals_ms = std::move(intervals);
  c.src_ports = std::move(src);
  c.dst_ports = std::move(dst);
  std::int64_t t = 0;
  for (double iv : c.intervals_ms) {
    t += static_cast<std::int64_t>(iv * 1000.0);
    c.timestamps_us.push_back(t);
  }
  c.original_length = c.packet_sizes.size();
  return c;
}

inline std::vector<malpaca::Connection> random_connections(std::size_t n, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<malpaca::Connection> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sizes, intervals;
    std::vector<malpaca::Port> src, dst;
    for (std::size_t j = 0; j < len; ++j) {
      sizes.push_back(static_cast<double>(40 + rng() % 1461));
      intervals.push_back(j == 0 ? 0.0 : static_cast<double>(rng() % 5000) / 10.0);
      src.push_back(static_cast<malpaca::Port>(1024 + rng() % 8));
      dst.push_back(static_cast<malpaca::Port>(rng() % 2 ? 443 : 20 + rng() % 30));
    }
    char name[32];
    std::snprintf(name, sizeof name, "c%05zu", i);
    out.push_back(make_connection(name, sizes, intervals, src, dst));
  }
  return out;
}

// Eight connections: seven copies of one behavior and one deviant that differs
// in the first `differing` features (order: size, interval, src port, dst port)
// at every position.
inline std::vector<malpaca::Connection> deviant_cluster(int differing, std::size_t len = 20) {
  std::vector<malpaca::Connection> out;
  for (int i = 0; i < 8; ++i) {
    const bool odd = i == 7;
    std::vector<double> sizes, intervals;
    std::vector<malpaca::Port> src, dst;
    for (std::size_t j = 0; j < len; ++j) {
      sizes.push_back(odd && differing > 0 ? 1500.0 : 60.0 + static_cast<double>(j % 2));
      intervals.push_back(j == 0 ? 0.0 : (odd && differing > 1 ? 900.0 : 2.0));
      src.push_back(odd && differing > 2 ? 40000 : 1900);
      dst.push_back(odd && differing > 3 ? 8080 : static_cast<malpaca::Port>(1000 + j));
    }
    char name[16];
    std::snprintf(name, sizeof name, "m%d", i);
    out.push_back(make_connection(name, sizes, intervals, src, dst));
  }
  return out;
}

// Two behaviors with matching statistics (same size multiset, same timing
// distribution) but mirrored size sequences and disjoint ports.
inline void write_mirrored_fixture(const std::filesystem::path& dir) {
  std::mt19937_64 rng(3);
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < 10; ++i) {
      std::vector<malpaca::PacketRecord> packets;
      std::int64_t t = 1'700'000'000'000'000LL + i * 10'000'000LL;
      for (int j = 0; j < 20; ++j) {
        if (j > 0) t += 100'000 + static_cast<std::int64_t>(rng() % 10'000);
        const bool small = (j % 2 == 0) == (g == 0);
        packets.push_back({t, "10.0.0.1", "203.0.113." + std::to_string(10 * g + i + 1),
                           static_cast<malpaca::Port>(g == 0 ? 41000 : 52000),
                           static_cast<malpaca::Port>(g == 0 ? 80 : 443), small ? 60u : 1400u, ""});
      }
      std::ofstream out(dir / ("g" + std::to_string(g) + "-" + std::to_string(i) + ".jsonl"));
      malpaca::write_jsonl(out, packets);
    }
}

}  // namespace testing_support
