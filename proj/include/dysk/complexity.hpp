#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace dysk {

// Grid scenario for the combination-count model: N = H*W feature points,
// alpha relationships per feature pair, L labels for the single-input
// comparison. Plain data; each operation validates its own precondition.
struct ComplexityScenario {
  int height = 1;
  int width = 1;
  double alpha = 1.0;
  int labels = 2;

  long feature_count() const { return long(height) * width; }
};

// Candidate-set size per feature: the main-text form subtracts the feature
// itself, the supplement form does not.
enum class CandidateForm { MainText, Supplement };

// log10 of the registration combination count (alpha*H*W - 1)^(H*W)
// (or (alpha*H*W)^(H*W) under the supplement form).
double log_registration_complexity(const ComplexityScenario& s,
                                   CandidateForm form = CandidateForm::MainText);

// log10 of the L^(H*W) labeling count.
double log_segmentation_complexity(const ComplexityScenario& s);

// R = log(alpha*N - 1) / log(L); nondecreasing in N for fixed alpha, L.
double complexity_ratio(const ComplexityScenario& s, CandidateForm form = CandidateForm::MainText);

// Smallest N with alpha*N - 1 > L, i.e. where registration combinations
// overtake segmentation configurations.
long complexity_crossover(double alpha, int labels);

enum class EnumerationTask { Registration, Segmentation };

// Brute-force count of independent per-feature choices; exact integer for
// tiny grids. Rejects once the closed form exceeds max_count, attaching the
// closed-form value to the error.
std::uint64_t enumerate_small(const ComplexityScenario& s, EnumerationTask task,
                              std::uint64_t max_count);

// Static vs dynamic combination budget from tap and relation counts.
struct ReductionReport {
  double dynamic_product = 0;  // |D| * |A|
  double static_product = 0;   // |U| * |W|
  double ratio = 0;
  bool strict_reduction = false;
};

ReductionReport dynamic_reduction_report(int static_taps, double effective_taps,
                                         int static_relations, double effective_relations);

void print_reduction_report(const ReductionReport& report, std::ostream& out);

}  // namespace dysk
