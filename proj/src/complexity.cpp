#include "dysk/complexity.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace dysk {

namespace {

double candidate_count(const ComplexityScenario& s, CandidateForm form) {
  const double n = static_cast<double>(s.feature_count());
  return form == CandidateForm::MainText ? s.alpha * n - 1.0 : s.alpha * n;
}

}  // namespace

double log_registration_complexity(const ComplexityScenario& s, CandidateForm form) {
  if (s.feature_count() < 1)
    throw std::invalid_argument("registration complexity needs H*W >= 1");
  const double c = candidate_count(s, form);
  if (c < 1.0)
    throw std::invalid_argument("candidate set size " + std::to_string(c) +
                                " < 1, model undefined");
  return static_cast<double>(s.feature_count()) * std::log10(c);
}

double log_segmentation_complexity(const ComplexityScenario& s) {
  if (s.feature_count() < 1)
    throw std::invalid_argument("segmentation complexity needs H*W >= 1");
  if (s.labels < 2)
    throw std::invalid_argument("segmentation needs L >= 2, got " + std::to_string(s.labels));
  return static_cast<double>(s.feature_count()) * std::log10(static_cast<double>(s.labels));
}

double complexity_ratio(const ComplexityScenario& s, CandidateForm form) {
  const double log_reg = log_registration_complexity(s, form);
  const double log_seg = log_segmentation_complexity(s);
  return log_reg / log_seg;
}

long complexity_crossover(double alpha, int labels) {
  if (alpha <= 0.0 || labels < 2)
    throw std::invalid_argument("crossover needs alpha > 0 and L >= 2");
  // Smallest N with alpha*N - 1 > L.
  return static_cast<long>(std::floor((labels + 1) / alpha)) + 1;
}

std::uint64_t enumerate_small(const ComplexityScenario& s, EnumerationTask task,
                              std::uint64_t max_count) {
  const long n = s.feature_count();
  if (n < 0) throw std::invalid_argument("enumerate_small: negative grid");
  if (n == 0) return 1;  // empty product

  long choices;
  if (task == EnumerationTask::Registration) {
    const double c = candidate_count(s, CandidateForm::MainText);
    const double rounded = std::round(c);
    if (c < 1.0 || std::abs(c - rounded) > 1e-9)
      throw std::invalid_argument("enumerate_small: candidate count " + std::to_string(c) +
                                  " is not a positive integer");
    choices = static_cast<long>(rounded);
  } else {
    if (s.labels < 2) throw std::invalid_argument("enumerate_small: L must be >= 2");
    choices = s.labels;
  }

  const double log_closed = n * std::log10(static_cast<double>(choices));
  if (log_closed > std::log10(static_cast<double>(max_count)) + 1e-12)
    throw std::invalid_argument("enumerate_small: " + std::to_string(choices) + "^" +
                                std::to_string(n) + " exceeds guard " +
                                std::to_string(max_count) + " (closed form 10^" +
                                std::to_string(log_closed) + ")");

  // Odometer over all assignments; the count is the point, not the speed.
  std::vector<long> assignment(static_cast<size_t>(n), 0);
  std::uint64_t count = 0;
  while (true) {
    ++count;
    long axis = 0;
    while (axis < n) {
      if (++assignment[static_cast<size_t>(axis)] < choices) break;
      assignment[static_cast<size_t>(axis)] = 0;
      ++axis;
    }
    if (axis == n) break;
  }
  return count;
}

ReductionReport dynamic_reduction_report(int static_taps, double effective_taps,
                                         int static_relations, double effective_relations) {
  if (static_taps < 0 || effective_taps < 0 || static_relations < 0 || effective_relations < 0)
    throw std::invalid_argument("dynamic_reduction_report: counts must be nonnegative");
  if (effective_taps > static_taps || effective_relations > static_relations)
    throw std::invalid_argument("dynamic_reduction_report: effective counts exceed static ones");
  ReductionReport report;
  report.dynamic_product = effective_taps * effective_relations;
  report.static_product = double(static_taps) * static_relations;
  report.ratio = report.static_product > 0 ? report.dynamic_product / report.static_product : 0.0;
  report.strict_reduction = report.dynamic_product < report.static_product;
  return report;
}

void print_reduction_report(const ReductionReport& report, std::ostream& out) {
  out << "dynamic |D|*|A| = " << report.dynamic_product << " vs static |U|*|W| = "
      << report.static_product << " (ratio " << report.ratio << ", strict reduction "
      << (report.strict_reduction ? "yes" : "no") << ")\n";
}

}  // namespace dysk
