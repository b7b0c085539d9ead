#include "fusiondiag/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

// Half of the 0.01-point display resolution, as a fraction.
constexpr double kTableRounding = 5e-5;

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_names(const ClassMetrics& metrics, std::span<const std::string> names) {
  if (names.size() != metrics.per_class.size()) {
    throw ConfigError("got " + std::to_string(names.size()) + " class names for " +
                      std::to_string(metrics.per_class.size()) + " classes");
  }
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : classes_(num_classes), counts_(num_classes * num_classes, 0) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::vector<std::uint64_t>> rows)
    : ConfusionMatrix(rows.size()) {
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != classes_) throw ShapeError("confusion matrix must be square");
    for (std::size_t p = 0; p < classes_; ++p) counts_[t * classes_ + p] = rows[t][p];
  }
}

void ConfusionMatrix::add(std::size_t true_class, std::size_t predicted, std::uint64_t count) {
  if (true_class >= classes_ || predicted >= classes_) {
    throw ShapeError("class index out of range for " + std::to_string(classes_) + "-class matrix");
  }
  counts_[true_class * classes_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t sum = 0;
  for (std::size_t c = 0; c < classes_; ++c) sum += at(c, c);
  return sum;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t true_class) const {
  std::uint64_t sum = 0;
  for (std::size_t p = 0; p < classes_; ++p) sum += at(true_class, p);
  return sum;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t sum = 0;
  for (std::size_t t = 0; t < classes_; ++t) sum += at(t, predicted);
  return sum;
}

ClassMetrics per_class_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (cm.num_classes() == 0 || total == 0) throw DataError("empty confusion matrix");

  ClassMetrics m;
  const std::size_t classes = cm.num_classes();
  for (std::size_t c = 0; c < classes; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t fp = cm.column_sum(c) - tp;
    const std::uint64_t fn = cm.row_sum(c) - tp;
    const std::uint64_t tn = total - tp - fp - fn;
    ClassScores s;
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    s.ovr_accuracy = ratio(tp + tn, total);
    m.macro_precision += s.precision;
    m.macro_recall += s.recall;
    m.macro_f1 += s.f1;
    m.per_class.push_back(s);
  }
  const double n = static_cast<double>(classes);
  m.macro_precision /= n;
  m.macro_recall /= n;
  m.macro_f1 /= n;
  m.accuracy = ratio(cm.trace(), total);
  return m;
}

std::string format_percent(double fraction) {
  if (!std::isfinite(fraction) || std::fabs(fraction) >= 1e12) {
    char fallback[64];
    std::snprintf(fallback, sizeof fallback, "%.2f", fraction * 100.0);
    return fallback;
  }
  // Shortest round-trip representation, e.g. "9.0915e-01".
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::fabs(fraction),
                                 std::chars_format::scientific);
  std::string text(buf, end);
  const auto e_pos = text.find('e');
  std::string digits = text.substr(0, e_pos);
  digits.erase(std::remove(digits.begin(), digits.end(), '.'), digits.end());
  const int exponent = std::stoi(text.substr(e_pos + 1));

  // value = digits * 10^(exponent - len + 1); we want hundredths of a percent,
  // i.e. value * 10^4.
  const int shift = exponent - static_cast<int>(digits.size()) + 1 + 4;
  unsigned long long hundredths = 0;
  if (shift >= 0) {
    digits.append(static_cast<std::size_t>(shift), '0');
    hundredths = std::stoull(digits);
  } else {
    const int drop = -shift;
    if (drop > static_cast<int>(digits.size())) {
      hundredths = 0;
    } else {
      const std::string kept = digits.substr(0, digits.size() - drop);
      hundredths = kept.empty() ? 0 : std::stoull(kept);
      if (digits[digits.size() - drop] >= '5') ++hundredths;
    }
  }
  std::ostringstream out;
  if (fraction < 0.0 && hundredths != 0) out << '-';
  out << hundredths / 100 << '.' << std::setw(2) << std::setfill('0') << hundredths % 100;
  return out.str();
}

std::string render_table(const ClassMetrics& metrics, std::span<const std::string> class_names) {
  check_names(metrics, class_names);
  std::size_t name_width = std::string("Overall").size();
  for (const auto& name : class_names) name_width = std::max(name_width, name.size());
  name_width = std::max(name_width, std::string("Classes").size());

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "Classes" << std::right
      << "  " << std::setw(13) << "Precision (%)" << "  " << std::setw(10) << "Recall (%)"
      << "  " << std::setw(6) << "F1 (%)" << "  " << std::setw(12) << "Accuracy (%)" << '\n';
  auto row = [&](const std::string& name, double p, double r, double f, double a) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right << "  "
        << std::setw(13) << format_percent(p) << "  " << std::setw(10) << format_percent(r)
        << "  " << std::setw(6) << format_percent(f) << "  " << std::setw(12)
        << format_percent(a) << '\n';
  };
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const ClassScores& s = metrics.per_class[c];
    row(class_names[c], s.precision, s.recall, s.f1, s.ovr_accuracy);
  }
  row("Overall", metrics.macro_precision, metrics.macro_recall, metrics.macro_f1,
      metrics.accuracy);
  return out.str();
}

std::string render_csv(const ClassMetrics& metrics, std::span<const std::string> class_names) {
  check_names(metrics, class_names);
  std::ostringstream out;
  out << "Classes,Precision (%),Recall (%),F1 (%),Accuracy (%)\n";
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const ClassScores& s = metrics.per_class[c];
    out << class_names[c] << ',' << format_percent(s.precision) << ','
        << format_percent(s.recall) << ',' << format_percent(s.f1) << ','
        << format_percent(s.ovr_accuracy) << '\n';
  }
  out << "Overall," << format_percent(metrics.macro_precision) << ','
      << format_percent(metrics.macro_recall) << ',' << format_percent(metrics.macro_f1) << ','
      << format_percent(metrics.accuracy) << '\n';
  return out.str();
}

bool verify_overall_consistency(const ClassMetrics& metrics) {
  if (metrics.per_class.empty()) return false;
  const double n = static_cast<double>(metrics.per_class.size());
  double p = 0.0, r = 0.0, f = 0.0, ovr = 0.0;
  for (const ClassScores& s : metrics.per_class) {
    p += s.precision;
    r += s.recall;
    f += s.f1;
    ovr += s.ovr_accuracy;
  }
  p /= n;
  r /= n;
  f /= n;
  ovr /= n;
  // Each class misclassification counts once as FP and once as FN.
  const double implied_accuracy = 1.0 - n * (1.0 - ovr) / 2.0;
  const double accuracy_tol = kTableRounding * (n / 2.0 + 1.0) + 1e-12;
  // The mean of rounded rows and the rounded Overall row each drift by up to
  // half a display step.
  const double macro_tol = 2.0 * kTableRounding + 1e-12;
  return std::fabs(p - metrics.macro_precision) <= macro_tol &&
         std::fabs(r - metrics.macro_recall) <= macro_tol &&
         std::fabs(f - metrics.macro_f1) <= macro_tol &&
         std::fabs(implied_accuracy - metrics.accuracy) <= accuracy_tol;
}

}  // namespace fdiag
