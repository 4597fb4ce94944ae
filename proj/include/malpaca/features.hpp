#pragma once

// Distance-ready representations of connections: port n-gram profiles and the
// statistical baseline feature vector.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "malpaca/capture.hpp"
#include "malpaca/error.hpp"

namespace malpaca {

using Gram = std::vector<Port>;

class NgramVocabulary {
 public:
  NgramVocabulary() = default;

  // Keeps the given gram order; vectors built against it follow that order.
  static NgramVocabulary from_grams(std::size_t order, std::vector<Gram> grams) {
    if (order == 0) throw Error(ErrorCode::InvalidParams, "n-gram order must be >= 1");
    NgramVocabulary vocab;
    vocab.order_ = order;
    for (std::size_t i = 0; i < grams.size(); ++i) {
      if (grams[i].size() != order)
        throw Error(ErrorCode::InvalidParams, "gram length differs from order");
      if (!vocab.index_.emplace(grams[i], i).second)
        throw Error(ErrorCode::InvalidParams, "duplicate gram in vocabulary");
    }
    vocab.grams_ = std::move(grams);
    return vocab;
  }

  std::size_t order() const { return order_; }
  std::size_t size() const { return grams_.size(); }
  const std::vector<Gram>& grams() const { return grams_; }

  std::optional<std::size_t> index_of(std::span<const Port> gram) const {
    auto it = index_.find(Gram(gram.begin(), gram.end()));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t order_ = 1;
  std::vector<Gram> grams_;
  std::map<Gram, std::size_t> index_;
};

// Sorted union of all windows of length `order` over every sequence.
inline NgramVocabulary build_vocabulary(std::span<const std::vector<Port>> sequences,
                                        std::size_t order) {
  if (order == 0) throw Error(ErrorCode::InvalidParams, "n-gram order must be >= 1");
  std::set<Gram> unique;
  for (const auto& seq : sequences) {
    if (seq.size() < order) continue;
    for (std::size_t i = 0; i + order <= seq.size(); ++i)
      unique.emplace(seq.begin() + static_cast<std::ptrdiff_t>(i),
                     seq.begin() + static_cast<std::ptrdiff_t>(i + order));
  }
  return NgramVocabulary::from_grams(order, std::vector<Gram>(unique.begin(), unique.end()));
}

struct NgramProfile {
  std::vector<std::uint32_t> counts;  // one entry per vocabulary gram
  std::size_t out_of_vocabulary = 0;
};

inline NgramProfile ngram_profile(std::span<const Port> seq, const NgramVocabulary& vocab) {
  NgramProfile profile;
  profile.counts.assign(vocab.size(), 0);
  const std::size_t order = vocab.order();
  if (seq.size() < order) return profile;
  for (std::size_t i = 0; i + order <= seq.size(); ++i) {
    if (auto idx = vocab.index_of(seq.subspan(i, order)))
      ++profile.counts[*idx];
    else
      ++profile.out_of_vocabulary;
  }
  return profile;
}

// Compact form of an NgramProfile used by the distance engine: sorted
// (index, count) pairs and a precomputed Euclidean norm.
struct SparseProfile {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  double norm = 0.0;

  static SparseProfile from_dense(const NgramProfile& dense) {
    SparseProfile sp;
    double sq = 0.0;
    for (std::size_t i = 0; i < dense.counts.size(); ++i) {
      if (dense.counts[i] == 0) continue;
      sp.entries.emplace_back(static_cast<std::uint32_t>(i), dense.counts[i]);
      sq += static_cast<double>(dense.counts[i]) * dense.counts[i];
    }
    sp.norm = std::sqrt(sq);
    return sp;
  }
};

inline SparseProfile sparse_profile(std::span<const Port> seq, const NgramVocabulary& vocab) {
  std::map<std::uint32_t, std::uint32_t> tally;
  const std::size_t order = vocab.order();
  for (std::size_t i = 0; i + order <= seq.size(); ++i)
    if (auto idx = vocab.index_of(seq.subspan(i, order)))
      ++tally[static_cast<std::uint32_t>(*idx)];
  SparseProfile sp;
  double sq = 0.0;
  for (const auto& [idx, count] : tally) {
    sp.entries.emplace_back(idx, count);
    sq += static_cast<double>(count) * count;
  }
  sp.norm = std::sqrt(sq);
  return sp;
}

// ---------------------------------------------------------------------------
// Statistical baseline

struct BaselineFeatures {
  double avg_size = 0.0;      // bytes
  double avg_interval = 0.0;  // milliseconds
  double duration = 0.0;      // seconds
  double max_psd = 0.0;
  bool degenerate_signal = false;  // duration < bin_width; max_psd forced to 0

  std::array<double, 4> as_array() const { return {avg_size, avg_interval, duration, max_psd}; }
};

// 0/1 presence signal: bin k covers [t0 + k*w, t0 + (k+1)*w); one bin per
// started bin width up to and including the bin holding the last packet.
inline std::vector<double> presence_signal(const Connection& conn, double bin_width) {
  if (!(bin_width > 0)) throw Error(ErrorCode::InvalidParams, "bin_width must be > 0");
  if (conn.timestamps_us.empty()) return {};
  const std::int64_t t0 = conn.timestamps_us.front();
  const double span_s = static_cast<double>(conn.timestamps_us.back() - t0) * 1e-6;
  const auto bins = static_cast<std::size_t>(std::floor(span_s / bin_width)) + 1;
  std::vector<double> signal(bins, 0.0);
  for (auto ts : conn.timestamps_us) {
    auto k = static_cast<std::size_t>(std::floor(static_cast<double>(ts - t0) * 1e-6 / bin_width));
    signal[std::min(k, bins - 1)] = 1.0;
  }
  return signal;
}

// One-sided power spectral density |X_k|^2 / N for k = 0 .. N/2.
inline std::vector<double> power_spectrum(std::span<const double> signal) {
  const int n = static_cast<int>(signal.size());
  if (n == 0) return {};
  const int bins = n / 2 + 1;
  std::vector<double> in(signal.begin(), signal.end());
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out_guard(out, &fftw_free);
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out, FFTW_ESTIMATE);
  std::unique_ptr<fftw_plan_s, decltype(&fftw_destroy_plan)> plan_guard(plan, &fftw_destroy_plan);
  fftw_execute(plan);
  std::vector<double> psd(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k)
    psd[static_cast<std::size_t>(k)] = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / n;
  return psd;
}

inline BaselineFeatures baseline_features(const Connection& conn, double bin_width = 1.0) {
  if (conn.length() == 0) throw Error(ErrorCode::EmptySequence, "connection has no packets");
  if (!(bin_width > 0)) throw Error(ErrorCode::InvalidParams, "bin_width must be > 0");
  BaselineFeatures f;
  const std::size_t n = conn.length();
  double size_sum = 0.0;
  for (double s : conn.packet_sizes) size_sum += s;
  f.avg_size = size_sum / static_cast<double>(n);
  if (n == 1) {
    f.degenerate_signal = true;
    return f;
  }
  double interval_sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) interval_sum += conn.intervals_ms[i];
  f.avg_interval = interval_sum / static_cast<double>(n - 1);
  f.duration = static_cast<double>(conn.timestamps_us.back() - conn.timestamps_us.front()) * 1e-6;
  if (f.duration < bin_width) {
    f.degenerate_signal = true;
    return f;
  }
  const auto psd = power_spectrum(presence_signal(conn, bin_width));
  // DC excluded: it only reflects the mean occupancy
  for (std::size_t k = 1; k < psd.size(); ++k) f.max_psd = std::max(f.max_psd, psd[k]);
  return f;
}

}  // namespace malpaca
