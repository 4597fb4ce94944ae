#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "malpaca/capture.hpp"
#include "malpaca/synth.hpp"

using namespace malpaca;

namespace {

std::vector<Connection> connections_of(const SynthTrace& t, std::size_t len) {
  return extract_connections(t.packets, len, 1, {kSynthLocalhost}).connections;
}

}  // namespace

TEST(Synth, SystematicScanWalksPortRange) {
  const auto trace = generate(BehaviorSpec::defaults(BehaviorKind::SystematicPortScan), 1, 20, 7);
  const auto conns = connections_of(trace, 20);
  ASSERT_EQ(conns.size(), 1u);
  for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(conns[0].dst_ports[j], 1000 + j);
  EXPECT_EQ(conns[0].direction, Direction::Outgoing);
}

TEST(Synth, HeartbeatWithoutJitterIsExactlyPeriodic) {
  auto spec = BehaviorSpec::defaults(BehaviorKind::PeriodicHeartbeat);
  spec.jitter = 0.0;
  const auto conns = connections_of(generate(spec, 3, 10, 1), 10);
  ASSERT_EQ(conns.size(), 3u);
  for (const auto& c : conns) {
    EXPECT_EQ(c.intervals_ms[0], 0.0);
    for (std::size_t j = 1; j < c.length(); ++j) EXPECT_EQ(c.intervals_ms[j], 1000.0);
    for (Port p : c.dst_ports) EXPECT_EQ(p, 8080);
  }
}

TEST(Synth, SameSeedSameBytesDifferentSeedDiffers) {
  const std::vector<BehaviorKind> kinds(kAllBehaviors.begin(), kAllBehaviors.end());
  const auto a = generate_fixture(kinds, 6, 20, 11);
  const auto b = generate_fixture(kinds, 6, 20, 11);
  const auto c = generate_fixture(kinds, 6, 20, 12);
  EXPECT_EQ(a.packets, b.packets);
  EXPECT_NE(a.packets, c.packets);
  std::ostringstream ja, jb;
  write_jsonl(ja, a.packets);
  write_jsonl(jb, b.packets);
  EXPECT_EQ(ja.str(), jb.str());
}

TEST(Synth, ConnectionsIndependentOfCount) {
  // per-connection streams: the first 3 connections do not change when more are generated
  const auto spec = BehaviorSpec::defaults(BehaviorKind::RandomizedPortScan);
  const auto small = connections_of(generate(spec, 3, 20, 5), 30);
  const auto large = connections_of(generate(spec, 10, 20, 5), 30);
  for (const auto& s : small) {
    auto it = std::find_if(large.begin(), large.end(), [&](const Connection& c) { return c.key == s.key; });
    ASSERT_NE(it, large.end());
    EXPECT_EQ(it->dst_ports, s.dst_ports);
    EXPECT_EQ(it->timestamps_us, s.timestamps_us);
  }
}

TEST(Synth, JitterAndSizeStayWithinBounds) {
  for (auto kind : kAllBehaviors) {
    const auto spec = BehaviorSpec::defaults(kind);
    const auto conns = connections_of(generate(spec, 10, 20, 3), 40);
    ASSERT_EQ(conns.size(), 10u) << to_string(kind);
    for (const auto& c : conns) {
      EXPECT_GE(c.length(), 20u);
      EXPECT_LE(c.length(), 22u);
      for (std::size_t j = 1; j < c.length(); ++j) {
        EXPECT_GE(c.intervals_ms[j], spec.period_ms * (1 - spec.jitter) - 1e-3);
        EXPECT_LE(c.intervals_ms[j], spec.period_ms * (1 + spec.jitter) + 1e-3);
      }
      for (double s : c.packet_sizes) {
        EXPECT_GE(s, spec.size - spec.size_jitter);
        EXPECT_LE(s, spec.size + spec.size_jitter);
      }
      if (kind == BehaviorKind::RandomizedPortScan)
        for (Port p : c.dst_ports) {
          EXPECT_GE(p, spec.port_lo);
          EXPECT_LE(p, spec.port_hi);
        }
      EXPECT_EQ(c.direction, kind == BehaviorKind::BulkTransfer ? Direction::Incoming : Direction::Outgoing);
    }
  }
}

TEST(Synth, InvalidParams) {
  auto spec = BehaviorSpec::defaults(BehaviorKind::PeriodicHeartbeat);
  spec.jitter = 0.7;
  EXPECT_THROW(generate(spec, 1, 20, 1), Error);
  spec = BehaviorSpec::defaults(BehaviorKind::SystematicPortScan);
  spec.port_lo = 10;
  spec.port_hi = 5;
  EXPECT_THROW(generate(spec, 1, 20, 1), Error);
  EXPECT_THROW(generate(BehaviorSpec::defaults(BehaviorKind::BulkTransfer), 1, 1, 1), Error);
}

TEST(Synth, BehaviorNamesRoundTrip) {
  for (auto k : kAllBehaviors) EXPECT_EQ(parse_behavior(to_string(k)), k);
  EXPECT_FALSE(parse_behavior("nope").has_value());
}

TEST(Synth, TraceDirectoryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "malpaca_test_synth";
  std::filesystem::remove_all(dir);
  const std::vector<BehaviorKind> kinds = {BehaviorKind::ConnectionSpam, BehaviorKind::BroadcastDiscovery};
  const auto trace = generate_fixture(kinds, 5, 20, 2);
  write_trace_directory(dir, trace);
  EXPECT_TRUE(std::filesystem::exists(dir / "ground_truth.csv"));
  std::vector<PacketRecord> back;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") {
      const auto r = parse_capture(e.path());
      back.insert(back.end(), r.packets.begin(), r.packets.end());
    }
  EXPECT_EQ(back.size(), trace.packets.size());
  EXPECT_EQ(connections_of({back, {}}, 30).size(), 10u);
}
