#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fdiag {

/// C x C count matrix; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes);
  explicit ConfusionMatrix(std::vector<std::vector<std::uint64_t>> rows);

  void add(std::size_t true_class, std::size_t predicted, std::uint64_t count = 1);

  std::size_t num_classes() const { return classes_; }
  std::uint64_t at(std::size_t true_class, std::size_t predicted) const {
    return counts_[true_class * classes_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t true_class) const;
  std::uint64_t column_sum(std::size_t predicted) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

// All values are fractions in [0, 1].
struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ovr_accuracy = 0.0;  // (TP + TN) / total, class vs rest
};

struct ClassMetrics {
  std::vector<ClassScores> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;  // trace / total
};

// Precision, recall and F1 are 0 wherever their denominator is 0.
ClassMetrics per_class_metrics(const ConfusionMatrix& cm);

// Percentage with two decimals, rounding half away from zero on the shortest
// decimal representation of the fraction: 0.90915 -> "90.92".
std::string format_percent(double fraction);

// Aligned text table: one row per class plus "Overall", columns
// Classes | Precision (%) | Recall (%) | F1 (%) | Accuracy (%).
std::string render_table(const ClassMetrics& metrics, std::span<const std::string> class_names);
// Same rows and columns, comma-separated with a header line.
std::string render_csv(const ClassMetrics& metrics, std::span<const std::string> class_names);

// True iff the macro fields equal the unweighted means of the per-class
// fields, and the overall accuracy agrees with the mean one-vs-rest accuracy
// (mean_ovr = 1 - 2 * (1 - accuracy) / C), allowing for tables rounded to
// 0.01 percentage points.
bool verify_overall_consistency(const ClassMetrics& metrics);

}  // namespace fdiag
