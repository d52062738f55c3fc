#include "capsid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "capsid/errors.hpp"

namespace capsid {

namespace {

// 1-based ranks of x in ascending order; tied values share the average of
// the ranks they span.
std::vector<double> midranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

ConfusionMetrics confusion_metrics(
    const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t n = confusion.size();
  if (n == 0) throw ContractError("confusion matrix is empty");
  for (const auto& row : confusion)
    if (row.size() != n)
      throw ContractError("confusion matrix is not square: row of " +
                          std::to_string(row.size()) + " in a matrix of " +
                          std::to_string(n));
  std::size_t total = 0, trace = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      total += confusion[r][c];
      if (r == c) trace += confusion[r][c];
    }
  if (total == 0) throw ContractError("confusion matrix counts no items");
  ConfusionMetrics out;
  out.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  out.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t tp = confusion[c][c];
    std::size_t fp = 0, fn = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r != c) {
        fp += confusion[r][c];
        fn += confusion[c][r];
      }
    }
    ClassMetrics& m = out.per_class[c];
    m.precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
  }
  return out;
}

double auc_macro(const std::vector<double>& scores, std::size_t n_classes,
                 const std::vector<std::size_t>& labels,
                 std::vector<std::size_t>* skipped_classes) {
  if (n_classes == 0) throw ContractError("auc needs at least one class");
  const std::size_t n = labels.size();
  if (scores.size() != n * n_classes)
    throw ShapeError("auc got " + std::to_string(scores.size()) +
                     " scores for " + std::to_string(n) + " items x " +
                     std::to_string(n_classes) + " classes");
  for (const auto l : labels)
    if (l >= n_classes)
      throw ContractError("auc label " + std::to_string(l) +
                          " is out of range for " +
                          std::to_string(n_classes) + " classes");
  if (skipped_classes) skipped_classes->clear();
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> column(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t pos = 0;
    for (const auto l : labels) pos += l == c;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
      if (skipped_classes) skipped_classes->push_back(c);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) column[i] = scores[i * n_classes + c];
    const auto ranks = midranks(column);
    double pos_ranks = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) pos_ranks += ranks[i];
    const double p = static_cast<double>(pos);
    sum += (pos_ranks - p * (p + 1.0) / 2.0) /
           (p * static_cast<double>(neg));
    ++used;
  }
  if (used == 0)
    throw DataError("auc is undefined: no class has both positive and "
                    "negative items");
  return sum / static_cast<double>(used);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ContractError("paired test got " + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + " samples");
  std::vector<double> diff;
  diff.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
  if (diff.empty())
    throw DataError("signed-rank test is degenerate: all differences are "
                    "zero");
  const std::size_t n = diff.size();
  if (n < 5)
    throw DataError("signed-rank test needs at least 5 nonzero differences, "
                    "got " + std::to_string(n));

  std::vector<double> abs_d(n);
  for (std::size_t i = 0; i < n; ++i) abs_d[i] = std::abs(diff[i]);
  const auto ranks = midranks(abs_d);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diff[i] > 0.0) w_plus += ranks[i];
  const double total = static_cast<double>(n) * (n + 1.0) / 2.0;
  const double w_minus = total - w_plus;
  WilcoxonResult out;
  out.n = n;
  out.w = std::min(w_plus, w_minus);

  if (n <= 20) {
    out.exact = true;
    const std::uint64_t patterns = 1ull << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      double wp = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1ull << i)) wp += ranks[i];
      const double wm = total - wp;
      if (std::min(wp, wm) <= out.w + 1e-9) ++hits;
    }
    out.p_value = static_cast<double>(hits) / static_cast<double>(patterns);
    return out;
  }

  out.exact = false;
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::sort(abs_d.begin(), abs_d.end());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[j + 1] == abs_d[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    var -= (t * t * t - t) / 48.0;
    i = j + 1;
  }
  if (var <= 0.0)
    throw DataError("signed-rank test is degenerate: zero rank variance");
  const double z = (out.w - mean + 0.5) / std::sqrt(var);
  out.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  return out;
}

}  // namespace capsid
