#pragma once

#include <map>
#include <span>
#include <utility>

#include "malpaca/error.hpp"

namespace malpaca {

// Adjusted Rand index between two labelings of the same points. Every
// distinct label value (noise included) is its own class.
template <typename A, typename B>
double adjusted_rand_index(std::span<const A> truth, std::span<const B> predicted) {
  if (truth.size() != predicted.size())
    throw Error(ErrorCode::LengthMismatch, "labelings differ in length");
  const double n = static_cast<double>(truth.size());
  if (truth.size() < 2) return 1.0;
  std::map<std::pair<A, B>, double> table;
  std::map<A, double> rows;
  std::map<B, double> cols;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    table[{truth[i], predicted[i]}] += 1;
    rows[truth[i]] += 1;
    cols[predicted[i]] += 1;
  }
  auto pairs = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [_, c] : table) index += pairs(c);
  for (const auto& [_, c] : rows) sum_rows += pairs(c);
  for (const auto& [_, c] : cols) sum_cols += pairs(c);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = (sum_rows + sum_cols) / 2;
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (index - expected) / (max_index - expected);
}

}  // namespace malpaca
