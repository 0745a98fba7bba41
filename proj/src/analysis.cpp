#include "quan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "quan/random.hpp"
#include "quan/toric.hpp"
#include "quan/training.hpp"

namespace quan {

Estimate mean_and_error(std::span<const double> values) {
  if (values.empty()) throw ConfigError("cannot average an empty sample");
  Estimate e;
  const double n = double(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.std_error = std::sqrt(ss / (n - 1) / n);
  }
  return e;
}

std::uint64_t snapshot_index(const Snapshot& s) {
  if (s.bits.size() > 64) throw ConfigError("snapshot too wide for a basis index");
  std::uint64_t idx = 0;
  for (std::size_t q = 0; q < s.bits.size(); ++q) idx |= std::uint64_t(s.bits[q]) << q;
  return idx;
}

double xeb_exact(const StateVector& psi) {
  double norm = 0, sq = 0;
  for (const auto& a : psi) {
    const double p = std::norm(a);
    norm += p;
    sq += p * p;
  }
  if (std::abs(norm - 1.0) > 1e-8) throw ConfigError("xeb_exact: state is not normalised");
  return double(psi.size()) * sq - 1.0;
}

Estimate xeb_estimate(std::span<const Snapshot> samples, const std::function<double(std::uint64_t)>& probability,
                      std::size_t qubits) {
  if (samples.empty()) throw ConfigError("xeb_estimate: empty sample");
  const double dim = std::ldexp(1.0, int(qubits));
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(dim * probability(snapshot_index(s)));
  Estimate e = mean_and_error(v);
  e.mean -= 1.0;
  return e;
}

Estimate average_confidence(std::span<const double> confidences) {
  if (confidences.empty()) throw ConfigError("average_confidence: no sets");
  return mean_and_error(confidences);
}

Estimate average_confidence_over_models(const std::vector<std::vector<double>>& per_model) {
  if (per_model.empty()) throw ConfigError("average_confidence: no models");
  std::vector<double> means;
  for (const auto& m : per_model) means.push_back(average_confidence(m).mean);
  return mean_and_error(means);
}

double accuracy(std::span<const double> confidences, std::span<const int> labels, double threshold) {
  if (confidences.size() != labels.size()) throw ConfigError("accuracy: confidences and labels differ in length");
  if (confidences.empty()) throw ConfigError("accuracy: no sets");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if ((confidences[i] > threshold) == (labels[i] == 1)) ++correct;
  return double(correct) / double(labels.size());
}

// ---------------------------------------------------------------- attention

std::size_t attention_group_size(std::size_t n, double quantile) {
  if (!(quantile > 0 && quantile <= 0.5)) throw ConfigError("attention quantile must lie in (0, 0.5]");
  if (double(n) < 2.0 / quantile)
    throw ConfigError("set of " + std::to_string(n) + " snapshots is smaller than 2/quantile = " +
                      std::to_string(2.0 / quantile));
  const std::size_t k = std::max<std::size_t>(10, std::size_t(std::lround(quantile * double(n))));
  if (2 * k > n) throw ConfigError("set of " + std::to_string(n) + " snapshots cannot hold two disjoint groups of " +
                                   std::to_string(k));
  return k;
}

namespace {

// Indices sorted by descending score; ties broken by index.
std::vector<std::size_t> rank_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

std::vector<LoopStat> loop_stats(const std::vector<const Snapshot*>& snaps, std::size_t max_side) {
  std::vector<LoopStat> out;
  if (snaps.empty()) return out;
  const std::size_t limit = std::min({max_side, snaps.front()->grid.rows, snaps.front()->grid.cols});
  for (std::size_t side = 1; side <= limit; ++side) {
    std::vector<double> v;
    v.reserve(snaps.size());
    for (const auto* s : snaps) v.push_back(closed_loop_expectation(*s, side));
    Estimate e = mean_and_error(v);
    out.push_back(LoopStat{4 * side, e.mean, e.std_error, snaps.size()});
  }
  return out;
}

}  // namespace

std::vector<LoopStat> loop_expectations(std::span<const Snapshot> snapshots, std::size_t max_side) {
  if (snapshots.empty()) throw ConfigError("loop expectations: no snapshots");
  std::vector<const Snapshot*> ptrs;
  ptrs.reserve(snapshots.size());
  for (const auto& s : snapshots) ptrs.push_back(&s);
  return loop_stats(ptrs, max_side);
}

double fit_loop_tension(std::span<const LoopStat> loops) {
  double num = 0, den = 0;
  for (const auto& l : loops) {
    if (!(l.mean > 0)) continue;
    const double p = double(l.perimeter);
    num += p * std::log(l.mean);
    den += p * p;
  }
  if (den == 0) throw ConfigError("loop tension fit: no loop with a positive expectation");
  return -num / den;
}

AttentionReport pooling_attention_report(const SnapshotSet& set, std::span<const double> scores, double quantile,
                                         std::size_t max_side) {
  if (scores.size() != set.size()) throw ConfigError("attention report: one score per snapshot required");
  const std::size_t k = attention_group_size(set.size(), quantile);
  AttentionReport rep;
  rep.scores.assign(scores.begin(), scores.end());
  const auto ranked = rank_desc(scores);
  rep.high.members.assign(ranked.begin(), ranked.begin() + std::ptrdiff_t(k));
  rep.low.members.assign(ranked.end() - std::ptrdiff_t(k), ranked.end());
  std::vector<const Snapshot*> hs, ls;
  for (auto i : rep.high.members) hs.push_back(&set[i]);
  for (auto i : rep.low.members) ls.push_back(&set[i]);
  rep.high.loops = loop_stats(hs, max_side);
  rep.low.loops = loop_stats(ls, max_side);
  return rep;
}

template <typename T>
AttentionReport pooling_attention_report(Classifier<T>& model, std::span<const SnapshotSet* const> sets, double quantile,
                                         int head, std::size_t max_side) {
  if (sets.empty()) throw ConfigError("attention report: no sets");
  AttentionReport rep;
  std::vector<const Snapshot*> hs, ls;
  std::size_t offset = 0;
  for (const auto* set : sets) {
    ForwardTrace trace;
    model.predict(*set, &trace);
    if (trace.scores.empty()) throw ConfigError("attention report: the model has no pooling attention block");
    const auto& sc = trace.scores[0];
    const std::size_t heads = sc.dim(0), n = sc.dim(1);
    if (n != set->size())
      throw ConfigError("attention report: pooled elements do not correspond to snapshots (use N_s = 1 or PAB-only)");
    if (head >= int(heads)) throw ConfigError("attention report: head index out of range");
    // Scores per original snapshot index.
    std::vector<double> per(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0;
      if (head >= 0) v = sc[std::size_t(head) * n + j];
      else {
        for (std::size_t h = 0; h < heads; ++h) v += sc[h * n + j];
        v /= double(heads);
      }
      per[trace.orders[0][j]] = v;
    }
    auto one = pooling_attention_report(*set, per, quantile, 0);
    for (auto i : one.high.members) {
      rep.high.members.push_back(offset + i);
      hs.push_back(&(*set)[i]);
    }
    for (auto i : one.low.members) {
      rep.low.members.push_back(offset + i);
      ls.push_back(&(*set)[i]);
    }
    rep.scores.insert(rep.scores.end(), per.begin(), per.end());
    offset += n;
  }
  rep.high.loops = loop_stats(hs, max_side);
  rep.low.loops = loop_stats(ls, max_side);
  return rep;
}

// ---------------------------------------------------------------- sample complexity

TTest one_sided_ttest(std::span<const double> values, double mu0, double alpha) {
  if (values.size() < 2) throw ConfigError("t-test needs at least two values");
  const double n = double(values.size());
  TTest r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double sd = std::sqrt(ss / (n - 1));
  if (sd == 0.0) {
    r.t = r.mean > mu0 ? std::numeric_limits<double>::infinity()
                       : (r.mean < mu0 ? -std::numeric_limits<double>::infinity() : 0.0);
    r.p = r.mean > mu0 ? 0.0 : 1.0;
  } else {
    r.t = (r.mean - mu0) / (sd / std::sqrt(n));
    boost::math::students_t dist(n - 1);
    r.p = boost::math::cdf(boost::math::complement(dist, r.t));
  }
  r.reject = r.p < alpha;
  return r;
}

SampleComplexity sample_complexity_ttest(const std::vector<std::vector<double>>& confidences, std::size_t set_size,
                                         std::size_t unit_cells, std::uint64_t seed, std::size_t repetitions,
                                         double alpha) {
  if (confidences.empty()) throw ConfigError("sample complexity: no models");
  const std::size_t nsets = confidences.front().size();
  for (const auto& c : confidences)
    if (c.size() != nsets) throw ConfigError("sample complexity: models scored different numbers of sets");
  if (nsets < 2) throw ConfigError("sample complexity: at least two sets required");
  if (repetitions == 0) throw ConfigError("sample complexity: at least one repetition required");
  SampleComplexity res;
  res.defined = true;
  std::vector<double> costs;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    Rng rng(derive_seed(seed, {rep}));
    std::vector<std::size_t> order(nsets);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(std::span<std::size_t>(order), rng);
    std::vector<double> y(nsets);
    for (std::size_t i = 0; i < nsets; ++i) {
      const std::size_t m = uniform_index(rng, confidences.size());
      y[i] = confidences[m][order[i]];
    }
    std::size_t d = nsets;
    if (!one_sided_ttest(std::span<const double>(y.data(), d), 0.5, alpha).reject) {
      res.defined = false;
      res.d_star.push_back(0);
      continue;
    }
    while (d > 2 && one_sided_ttest(std::span<const double>(y.data(), d - 1), 0.5, alpha).reject) --d;
    res.d_star.push_back(d);
    costs.push_back(double(d) * double(set_size) * double(unit_cells));
  }
  if (res.defined) res.cost = mean_and_error(costs);
  return res;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman: need two equal-length samples of size >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * double(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

template AttentionReport pooling_attention_report(Classifier<float>&, std::span<const SnapshotSet* const>, double, int,
                                                  std::size_t);
template AttentionReport pooling_attention_report(Classifier<double>&, std::span<const SnapshotSet* const>, double, int,
                                                  std::size_t);

}  // namespace quan
