#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "capsid/errors.hpp"
#include "capsid/metrics.hpp"
#include "capsid/rng.hpp"

using namespace capsid;

namespace {

using Matrix = std::vector<std::vector<std::size_t>>;

// Concordant-pair oracle for one-vs-rest AUC: ties count half.
double pair_count_auc(const std::vector<double>& scores, std::size_t classes,
                      const std::vector<std::size_t>& labels) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] == c) continue;
        const double pi = scores[i * classes + c];
        const double nj = scores[j * classes + c];
        wins += pi > nj ? 1.0 : (pi == nj ? 0.5 : 0.0);
        ++pairs;
      }
    }
    if (pairs) {
      sum += wins / static_cast<double>(pairs);
      ++used;
    }
  }
  return sum / static_cast<double>(used);
}

}  // namespace

TEST_CASE("confusion metrics match the worked examples") {
  Matrix m45 = {{45, 5}, {0, 0}};
  CHECK(confusion_metrics(m45).accuracy == doctest::Approx(0.9).epsilon(1e-12));

  Matrix perfect = {{7, 0, 0}, {0, 3, 0}, {0, 0, 5}};
  const auto p = confusion_metrics(perfect);
  CHECK(p.accuracy == 1.0);
  for (const auto& c : p.per_class) {
    CHECK(c.precision == 1.0);
    CHECK(c.recall == 1.0);
    CHECK(c.f1 == 1.0);
  }

  // Class 0: precision 12/15 = 0.8, recall 12/20 = 0.6.
  Matrix mixed = {{12, 8}, {3, 9}};
  const auto mm = confusion_metrics(mixed);
  CHECK(mm.per_class[0].precision == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(mm.per_class[0].recall == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(mm.per_class[0].f1 ==
        doctest::Approx(2.0 * 0.8 * 0.6 / 1.4).epsilon(1e-12));

  // A class never predicted and never present scores zero, not NaN.
  Matrix holes = {{0, 0, 0}, {0, 4, 0}, {0, 1, 0}};
  const auto h = confusion_metrics(holes);
  CHECK(h.per_class[0].precision == 0.0);
  CHECK(h.per_class[0].recall == 0.0);
  CHECK(h.per_class[0].f1 == 0.0);
  CHECK(h.per_class[2].recall == 0.0);

  CHECK_THROWS_AS(confusion_metrics({}), ContractError);
  CHECK_THROWS_AS(confusion_metrics({{1, 2}, {3}}), ContractError);
  Matrix zeros = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(confusion_metrics(zeros), ContractError);
}

TEST_CASE("micro-averaged precision and recall equal accuracy") {
  Rng rng(404);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.next_below(6);
    Matrix m(n, std::vector<std::size_t>(n, 0));
    for (auto& row : m)
      for (auto& cell : row) cell = rng.next_below(30);
    m[0][0] += 1;  // keeps the total positive
    const auto r = confusion_metrics(m);
    std::size_t tp = 0, tp_fp = 0, tp_fn = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += m[i][i];
      for (std::size_t j = 0; j < n; ++j) {
        tp_fp += m[j][i];
        tp_fn += m[i][j];
        total += m[i][j];
      }
    }
    const double micro_p = static_cast<double>(tp) / tp_fp;
    const double micro_r = static_cast<double>(tp) / tp_fn;
    CHECK(micro_p == r.accuracy);
    CHECK(micro_r == r.accuracy);
    CHECK(r.accuracy == static_cast<double>(tp) / total);
  }
}

TEST_CASE("auc hits the rank-statistic landmarks") {
  // Perfect separation.
  const std::vector<double> sep = {0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8};
  CHECK(auc_macro(sep, 2, {0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));

  // Identical scores everywhere: every class sits at chance.
  const std::vector<double> flat(12, 0.5);
  CHECK(auc_macro(flat, 3, {0, 1, 2, 0}) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // Classes with no positives are skipped and reported.
  std::vector<std::size_t> skipped;
  const std::vector<double> part = {0.7, 0.2, 0.1, 0.3, 0.6, 0.1,
                                    0.2, 0.7, 0.1, 0.6, 0.3, 0.1};
  const double auc = auc_macro(part, 3, {0, 0, 1, 1}, &skipped);
  CHECK(skipped == std::vector<std::size_t>{2});
  CHECK(auc > 0.0);

  CHECK_THROWS_AS(auc_macro(flat, 3, {1, 1, 1, 1}), DataError);
  CHECK_THROWS_AS(auc_macro(flat, 3, {0, 1, 2}), ShapeError);
  CHECK_THROWS_AS(auc_macro(flat, 3, {0, 1, 2, 9}), ContractError);
}

TEST_CASE("auc equals the pair-counting oracle on random instances") {
  Rng rng(505);
  for (int t = 0; t < 25; ++t) {
    const std::size_t classes = 2 + rng.next_below(3);
    const std::size_t items = 8 + rng.next_below(43);
    std::vector<std::size_t> labels(items);
    for (auto& l : labels) l = rng.next_below(classes);
    labels[0] = 0;
    labels[1] = 1;  // at least two classes appear
    std::vector<double> scores(items * classes);
    for (auto& s : scores)
      s = 0.1 * static_cast<double>(rng.next_below(10));  // ties likely
    CHECK(auc_macro(scores, classes, labels) ==
          doctest::Approx(pair_count_auc(scores, classes, labels))
              .epsilon(1e-12));
  }
}

TEST_CASE("signed-rank test matches the exact enumeration landmarks") {
  // Five distinct positive differences: min rank sum 0, two extreme
  // patterns out of 32.
  const std::vector<double> base = {1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> zero(5, 0.0);
  const auto r = wilcoxon_signed_rank(base, zero);
  CHECK(r.w == 0.0);
  CHECK(r.n == 5);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-12));

  // Swapping the samples flips the sign but not the statistic.
  const auto rs = wilcoxon_signed_rank(zero, base);
  CHECK(rs.w == r.w);
  CHECK(rs.p_value == r.p_value);

  // Antisymmetric differences sit at the maximum: p = 1.
  const std::vector<double> anti_a = {1.0, -1.0, 2.0, -2.0, 3.0, -3.0};
  const std::vector<double> anti_b(6, 0.0);
  const auto ra = wilcoxon_signed_rank(anti_a, anti_b);
  CHECK(ra.w == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(ra.p_value == 1.0);

  // Midranks: |d| = {1,1,1,2,3} ranks to {2,2,2,4,5}.
  const std::vector<double> tied_a = {1.0, 1.0, -1.0, 2.0, 3.0};
  const std::vector<double> tied_b(5, 0.0);
  const auto rt = wilcoxon_signed_rank(tied_a, tied_b);
  CHECK(rt.w == doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(wilcoxon_signed_rank({1.0, 2.0}, {1.0}), ContractError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1.0, 2.0}, {1.0, 2.0}), DataError);
  CHECK_THROWS_AS(
      wilcoxon_signed_rank({1.0, 2.0, 3.0, 4.0}, {0.0, 0.0, 0.0, 0.0}),
      DataError);
}

TEST_CASE("signed-rank enumeration is a proper distribution") {
  // With 6 distinct ranks the 64 sign patterns partition into min-sums
  // whose probabilities add to one; the largest observable statistic has
  // p exactly 1.
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> b(6, 0.0);
  // Flip signs so the observed min(W+, W-) is maximal: 10 vs 11.
  const std::vector<double> near = {1.0, -2.0, 3.0, -4.0, 5.0, -6.0};
  const auto rn = wilcoxon_signed_rank(near, b);
  CHECK(rn.w == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(rn.p_value <= 1.0);
  CHECK(rn.p_value > 0.8);

  const auto extreme = wilcoxon_signed_rank(a, b);
  CHECK(extreme.p_value == doctest::Approx(2.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("signed-rank test switches to the normal approximation") {
  Rng rng(606);
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(0.0, 1.0) + 0.15;
    b[i] = rng.uniform(0.0, 1.0);
  }
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(!r.exact);
  CHECK(r.n == 30);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);

  // A clearly shifted sample must look significant.
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] + 1.0 + 0.01 * i;
  CHECK(wilcoxon_signed_rank(a, b).p_value < 0.001);

  // n = 20 still enumerates exactly.
  std::vector<double> c(20), d(20);
  for (std::size_t i = 0; i < 20; ++i) {
    c[i] = static_cast<double>(i + 1);
    d[i] = 0.0;
  }
  const auto re = wilcoxon_signed_rank(c, d);
  CHECK(re.exact);
  CHECK(re.p_value == doctest::Approx(2.0 / 1048576.0).epsilon(1e-12));
}
