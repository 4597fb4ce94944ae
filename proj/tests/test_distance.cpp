#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "malpaca/distance.hpp"
#include "oracles.hpp"

using namespace malpaca;
using testing_support::make_connection;
using testing_support::random_connections;

namespace {

double dtw(std::vector<double> a, std::vector<double> b) { return dtw_distance(a, b); }

SquareMatrix from_upper(std::size_t n, const std::vector<double>& upper) {
  SquareMatrix m(n);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = upper[idx++];
  return m;
}

NgramProfile profile(std::vector<std::uint32_t> counts) { return {std::move(counts), 0}; }

DistanceMatrix matrix_for(const std::vector<Connection>& conns, unsigned workers, bool retain = false,
                          std::string_view features = "ps,in,sp,dp") {
  DistanceOptions opt;
  opt.features = FeatureSet::parse(features);
  opt.workers = workers;
  opt.retain_components = retain;
  return combined_matrix(conns, build_port_vocabularies(conns, 3), opt);
}

}  // namespace

TEST(Dtw, Examples) {
  EXPECT_EQ(dtw({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(dtw({0}, {5}), 5.0);
  EXPECT_EQ(dtw({1, 2, 3}, {1, 1, 2, 2, 3, 3}), 0.0);
  EXPECT_EQ(dtw({1, 3}, {2}), 2.0);
  EXPECT_THROW(dtw({}, {1}), Error);
}

TEST(Dtw, MatchesExhaustiveWarpingPaths) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a(1 + rng() % 6), b(1 + rng() % 6);
    for (auto& x : a) x = rng() % 10;
    for (auto& x : b) x = rng() % 10;
    ASSERT_EQ(dtw(a, b), oracle::dtw_exhaustive(a, b)) << trial;
  }
}

TEST(Dtw, SymmetricOnRandomSequences) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> val(-100, 100);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + rng() % 30), b(1 + rng() % 30);
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    ASSERT_EQ(dtw(a, b), dtw(b, a));
  }
}

TEST(NormalizeMatrix, Examples) {
  const auto out = normalize_matrix(from_upper(3, {1, 3, 5}));
  EXPECT_EQ(out(0, 1), 0.0);
  EXPECT_EQ(out(0, 2), 0.5);
  EXPECT_EQ(out(1, 2), 1.0);
  EXPECT_EQ(out(2, 1), 1.0);
  const auto flat = normalize_matrix(from_upper(3, {4, 4, 4}));
  for (double v : flat.data()) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeMatrix, RandomFourByFour) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> val(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> upper(6);
    for (auto& x : upper) x = val(rng);
    const double lo = *std::min_element(upper.begin(), upper.end());
    const double hi = *std::max_element(upper.begin(), upper.end());
    const auto out = normalize_matrix(from_upper(4, upper));
    int zeros = 0, ones = 0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(out(i, i), 0.0);
      for (std::size_t j = i + 1; j < 4; ++j) {
        const double v = out(i, j);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, (upper[idx++] - lo) / (hi - lo), 1e-12);
        zeros += v == 0.0;
        ones += v == 1.0;
      }
    }
    EXPECT_EQ(zeros, 1);
    EXPECT_EQ(ones, 1);
  }
}

TEST(Cosine, WorkedPortSequenceValue) {
  const double expected = 1.0 - 3.0 / (std::sqrt(6.0) * 2.0);
  const double d = cosine_distance(profile({1, 2, 1, 0, 0}), profile({1, 1, 0, 1, 1}));
  EXPECT_NEAR(d, 0.3876, 1e-4);
  EXPECT_NEAR(d, expected, 1e-15);
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_distance(profile({3, 1, 2}), profile({3, 1, 2})), 0.0, 1e-15);
  EXPECT_EQ(cosine_distance(profile({1, 0}), profile({0, 1})), 1.0);
  EXPECT_EQ(cosine_distance(profile({0, 0}), profile({0, 1})), 1.0);
  EXPECT_THROW(cosine_distance(profile({1}), profile({1, 2})), Error);
}

TEST(Cosine, ScaleInvariantAndSparseAgrees) {
  std::mt19937 rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint32_t> u(8), v(8);
    for (auto& x : u) x = rng() % 4;
    for (auto& x : v) x = rng() % 4;
    const std::uint32_t c = 1 + rng() % 9;
    auto cu = u;
    for (auto& x : cu) x *= c;
    const double base = cosine_distance(profile(u), profile(v));
    EXPECT_NEAR(base, cosine_distance(profile(cu), profile(v)), 1e-12);
    EXPECT_NEAR(base, cosine_distance(SparseProfile::from_dense(profile(u)), SparseProfile::from_dense(profile(v))),
                1e-12);
  }
}

TEST(FeatureSet, ParseAndRender) {
  const auto fs = FeatureSet::parse("sp,ps");
  EXPECT_TRUE(fs.has(Feature::PacketSize));
  EXPECT_TRUE(fs.has(Feature::SourcePort));
  EXPECT_FALSE(fs.has(Feature::Interval));
  EXPECT_EQ(fs.count(), 2u);
  EXPECT_EQ(fs.str(), "ps,sp");
  EXPECT_THROW(FeatureSet::parse("ps,xx"), Error);
  EXPECT_THROW(FeatureSet::parse(""), Error);
}

TEST(CombinedMatrix, IdenticalConnectionsAreZero) {
  const auto a = make_connection("a", {60, 70, 80}, {0, 5, 5}, {1, 1, 1}, {80, 81, 82});
  auto b = a;
  b.key.sample_id = "b";
  const auto c = make_connection("c", {1500, 10, 900}, {0, 500, 1}, {7, 8, 9}, {22, 23, 24});
  const auto m = matrix_for({a, b, c}, 1);
  EXPECT_EQ(m(0, 1), 0.0);
  EXPECT_GT(m(0, 2), 0.0);
}

TEST(CombinedMatrix, MaximalComponentsGiveOne) {
  // pair (0, 2) is the extreme pair in every component
  const auto a = make_connection("a", {0, 0}, {0, 0}, {1, 1, 1}, {5, 5, 5});
  const auto b = make_connection("b", {1, 1}, {0, 1}, {1, 1, 2}, {5, 5, 6});
  const auto c = make_connection("c", {100, 100}, {0, 100}, {2, 2, 2}, {6, 6, 6});
  const auto m = matrix_for({a, b, c}, 1, true);
  for (std::size_t f = 0; f < 4; ++f) EXPECT_EQ((*m.components[f])(0, 2), 1.0) << f;
  EXPECT_EQ(m(0, 2), 1.0);
}

TEST(CombinedMatrix, ValueIsMeanOfEnabledComponents) {
  const auto conns = random_connections(12, 10, 4);
  for (const char* feats : {"ps,in,sp,dp", "ps", "in,dp", "sp,dp,in"}) {
    const auto m = matrix_for(conns, 1, true, feats);
    const auto fs = FeatureSet::parse(feats);
    for (std::size_t i = 0; i < conns.size(); ++i)
      for (std::size_t j = 0; j < conns.size(); ++j) {
        double sum = 0.0;
        for (auto f : kAllFeatures)
          if (fs.has(f)) sum += (*m.components[static_cast<std::size_t>(f)])(i, j);
          else EXPECT_FALSE(m.components[static_cast<std::size_t>(f)].has_value());
        EXPECT_NEAR(m(i, j), sum / static_cast<double>(fs.count()), 1e-15);
      }
  }
}

TEST(CombinedMatrix, InvariantsOnRandomConnections) {
  const auto conns = random_connections(60, 20, 77);
  const auto m = matrix_for(conns, 1, true);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m(i, i), 0.0);
    for (std::size_t j = 0; j < m.size(); ++j) {
      EXPECT_EQ(m(i, j), m(j, i));
      EXPECT_GE(m(i, j), 0.0);
      EXPECT_LE(m(i, j), 1.0);
    }
  }
  for (std::size_t f : {0u, 1u}) {
    double lo = 2, hi = -1;
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        lo = std::min(lo, (*m.components[f])(i, j));
        hi = std::max(hi, (*m.components[f])(i, j));
      }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
  }
}

TEST(CombinedMatrix, ParallelEqualsSerialBitForBit) {
  const auto conns = random_connections(80, 20, 123);
  const auto serial = matrix_for(conns, 1);
  for (unsigned w : {2u, 3u, 8u}) {
    const auto parallel = matrix_for(conns, w);
    EXPECT_EQ(std::memcmp(serial.values.data().data(), parallel.values.data().data(),
                          serial.values.data().size() * sizeof(double)),
              0)
        << w;
  }
}

TEST(CombinedMatrix, TooFewConnections) {
  const auto conns = random_connections(1, 5, 1);
  try {
    matrix_for(conns, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewConnections);
  }
}

TEST(BaselineMatrix, BoundedAndSymmetric) {
  std::vector<BaselineFeatures> feats = {{100, 10, 1, 0.5}, {1500, 0, 10, 0}, {800, 5, 5, 0.25}};
  const auto m = baseline_matrix(feats, {"a", "b", "c"});
  EXPECT_NEAR(m(0, 1), 1.0, 1e-15);  // opposite corners of the unit hypercube
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(m(i, j), m(j, i));
      EXPECT_LE(m(i, j), 1.0);
    }
}

TEST(DistanceCsv, RoundTripIsExact) {
  const auto conns = random_connections(15, 8, 5);
  const auto m = matrix_for(conns, 1);
  std::stringstream buf;
  write_distance_csv(buf, m);
  const auto back = read_distance_csv(buf);
  EXPECT_EQ(back.keys, m.keys);
  EXPECT_EQ(back.values.data(), m.values.data());
}

TEST(DistanceCsv, RejectsMismatchedRows) {
  std::stringstream buf("key,a,b\na,0,1\n");
  EXPECT_THROW(read_distance_csv(buf), Error);
}
