#pragma once

#include <cstddef>
#include <vector>

namespace capsid {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ConfusionMetrics {
  double accuracy = 0.0;  // fraction of the trace over all entries
  std::vector<ClassMetrics> per_class;
};

// counts[true][predicted] for a square matrix. Zero denominators yield
// zero scores rather than NaN.
ConfusionMetrics confusion_metrics(
    const std::vector<std::vector<std::size_t>>& confusion);

// One-vs-rest ROC AUC per class from the rank statistic (ties share
// midranks), macro-averaged. scores is row-major [n_items x n_classes].
// Classes lacking a positive or a negative item are skipped and listed in
// skipped_classes; when every class is skipped the AUC is undefined.
double auc_macro(const std::vector<double>& scores, std::size_t n_classes,
                 const std::vector<std::size_t>& labels,
                 std::vector<std::size_t>* skipped_classes = nullptr);

struct WilcoxonResult {
  double w = 0.0;        // min of the signed rank sums
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;     // pairs kept after dropping zero differences
  bool exact = false;    // full enumeration (n <= 20) vs normal approximation
};

// Paired two-sided Wilcoxon signed-rank test on a[i] - b[i]. Zero
// differences are dropped; absolute differences are ranked with midranks
// for ties. Exact enumeration of all sign assignments up to n = 20, normal
// approximation with tie correction beyond.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

}  // namespace capsid
