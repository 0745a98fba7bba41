#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "quan/classifier.hpp"
#include "quan/rqc.hpp"
#include "quan/snapshot.hpp"

namespace quan {

struct Estimate {
  double mean = 0;
  double std_error = 0;
};

/// Sample mean and standard error of the mean (zero for a single value).
Estimate mean_and_error(std::span<const double> values);

/// Basis index whose bit q is snapshot bit q.
std::uint64_t snapshot_index(const Snapshot& s);

/// 2^n sum_b p(b)^2 - 1.
double xeb_exact(const StateVector& psi);

/// 2^n mean_i p(B_i) - 1 with the standard error of the mean.
Estimate xeb_estimate(std::span<const Snapshot> samples, const std::function<double(std::uint64_t)>& probability,
                      std::size_t qubits);

/// Mean confidence over sets with its standard error.
Estimate average_confidence(std::span<const double> confidences);
/// Mean over models of each model's mean confidence; the error is taken across models.
Estimate average_confidence_over_models(const std::vector<std::vector<double>>& per_model);

/// Fraction of sets with (y > threshold) == (label == 1).
double accuracy(std::span<const double> confidences, std::span<const int> labels, double threshold = 0.5);

// ---------------------------------------------------------------- attention

struct LoopStat {
  std::size_t perimeter = 0;
  double mean = 0;
  double std_error = 0;
  std::size_t snapshots = 0;
};

struct AttentionGroup {
  std::vector<std::size_t> members;  // indices into the analysed snapshots
  std::vector<LoopStat> loops;       // one entry per square side 1..max_side
};

struct AttentionReport {
  std::vector<double> scores;  // per snapshot, each set's scores summing to one
  AttentionGroup high, low;
};

/// Snapshots per group: max(10, round(quantile * n)); requires n >= 2 / quantile.
std::size_t attention_group_size(std::size_t n, double quantile);

/// Groups the top and bottom scored snapshots of one set and measures the
/// closed-loop expectation of L x L squares (perimeter 4L) in each group.
/// The standard error is taken over the group's per-snapshot placement averages.
AttentionReport pooling_attention_report(const SnapshotSet& set, std::span<const double> scores, double quantile,
                                         std::size_t max_side = 6);

/// Runs the model on each set, averages the pooling scores over heads (or
/// takes one head when head >= 0), selects groups within every set and
/// pools the group members of all sets before measuring loops.
template <typename T>
AttentionReport pooling_attention_report(Classifier<T>& model, std::span<const SnapshotSet* const> sets, double quantile,
                                         int head = -1, std::size_t max_side = 6);

/// Closed-loop expectation per square side 1..max_side over many snapshots;
/// the standard error is taken over per-snapshot placement averages.
std::vector<LoopStat> loop_expectations(std::span<const Snapshot> snapshots, std::size_t max_side);

/// Least-squares alpha in <Z_closed> = exp(-alpha * perimeter) through the
/// origin of log space, using the entries with positive mean.
double fit_loop_tension(std::span<const LoopStat> loops);

// ---------------------------------------------------------------- sample complexity

struct TTest {
  double mean = 0;
  double t = 0;
  double p = 1;
  bool reject = false;
};

/// One-sided one-sample t-test of H0: mean <= mu0 against mean > mu0 with
/// n - 1 degrees of freedom. Zero variance rejects exactly when mean > mu0.
TTest one_sided_ttest(std::span<const double> values, double mu0 = 0.5, double alpha = 0.05);

struct SampleComplexity {
  bool defined = false;            // false when the test fails with all sets
  std::vector<std::size_t> d_star; // per repetition; 0 marks an undefined repetition
  Estimate cost;                   // D* N N_uc over repetitions
};

/// confidences[m][i] is model m's confidence on set i. Each repetition draws
/// a model per set uniformly with replacement and a random set order, then
/// lowers D from the number of sets while the test on the first D sets still
/// rejects; D* is the smallest rejecting D reached (at least 2).
SampleComplexity sample_complexity_ttest(const std::vector<std::vector<double>>& confidences, std::size_t set_size,
                                         std::size_t unit_cells, std::uint64_t seed, std::size_t repetitions = 10,
                                         double alpha = 0.05);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace quan
