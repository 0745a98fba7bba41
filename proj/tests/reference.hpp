#pragma once

// Naive reference implementations used as independent oracles. Everything is
// nested std::vector arithmetic written directly from the block definitions,
// sharing no code with the library.

#include <cmath>
#include <vector>

#include "quan/autodiff.hpp"
#include "quan/random.hpp"
#include "quan/snapshot.hpp"

namespace ref {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[r][c]

inline Mat from_tensor(const quan::Tensor<double>& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline Vec from_vector(const quan::Tensor<double>& t) { return t.values(); }

// W [out, in] applied to x [in].
inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (std::size_t o = 0; o < w.size(); ++o)
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w[o][i] * x[i];
  return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec layer_norm(const Vec& x, const Vec& g, const Vec& b, double eps = 1e-5) {
  double mu = 0, var = 0;
  for (double v : x) mu += v;
  mu /= double(x.size());
  for (double v : x) var += (v - mu) * (v - mu);
  var /= double(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + eps) * g[i] + b[i];
  return y;
}

struct Block {
  Mat Q, K, V, O;
  Vec g1, b1, g2, b2;
};

inline Block read_block(const quan::ParameterStore<double>& s, const std::string& p) {
  return {from_tensor(s.at(p + ".query").value), from_tensor(s.at(p + ".key").value),
          from_tensor(s.at(p + ".value").value), from_tensor(s.at(p + ".out").value),
          from_vector(s.at(p + ".norm1.gain").value), from_vector(s.at(p + ".norm1.bias").value),
          from_vector(s.at(p + ".norm2.gain").value), from_vector(s.at(p + ".norm2.bias").value)};
}

// Attention block on one set: rows of `query` attend to rows of `key`.
inline Mat block(const Block& w, const Mat& query, const Mat& key, std::size_t heads, bool relu) {
  const std::size_t d = w.Q.size(), dk = d / heads;
  Mat q, k, v;
  for (const auto& x : query) q.push_back(matvec(w.Q, x));
  for (const auto& x : key) {
    k.push_back(matvec(w.K, x));
    v.push_back(matvec(w.V, x));
  }
  Mat out;
  for (std::size_t a = 0; a < q.size(); ++a) {
    Vec h = q[a];
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Vec logit(k.size());
      double mx = -1e300;
      for (std::size_t b = 0; b < k.size(); ++b) {
        double dot = 0;
        for (std::size_t c = hd * dk; c < (hd + 1) * dk; ++c) dot += q[a][c] * k[b][c];
        logit[b] = dot / std::sqrt(double(dk));
        mx = std::max(mx, logit[b]);
      }
      double z = 0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t b = 0; b < k.size(); ++b)
        for (std::size_t c = hd * dk; c < (hd + 1) * dk; ++c) h[c] += logit[b] / z * v[b][c];
    }
    Vec h1 = layer_norm(h, w.g1, w.b1);
    Vec ff = matvec(w.O, h1);
    Vec r(d);
    for (std::size_t c = 0; c < d; ++c) r[c] = h1[c] + (relu ? std::max(0.0, ff[c]) : sigmoid(ff[c]));
    Vec y = layer_norm(r, w.g2, w.b2);
    for (auto& e : y) e = sigmoid(e);
    out.push_back(y);
  }
  return out;
}

// One MSSAB layer on one set; `order` is the shuffle and `sigma` the fold order.
inline Mat mssab(const Block& sab, const Block& mab, const Mat& x, const std::vector<std::size_t>& order,
                 const std::vector<std::size_t>& sigma, std::size_t ns, std::size_t heads, bool relu) {
  const std::size_t ms = x.size() / ns;
  std::vector<Mat> y(ns);
  for (std::size_t m = 0; m < ns; ++m) {
    Mat part;
    for (std::size_t j = 0; j < ms; ++j) part.push_back(x[order[m * ms + j]]);
    y[m] = block(sab, part, part, heads, relu);
  }
  if (ns == 1) return y[0];
  std::vector<Mat> h = y;
  for (std::size_t t = 0; t + 1 < ns; ++t) {
    std::vector<Mat> next(ns);
    for (std::size_t m = 0; m < ns; ++m) next[m] = block(mab, y[(m + t + 1) % ns], h[m], heads, relu);
    h = next;
  }
  Mat z = h[sigma[0]];
  for (std::size_t t = 1; t < ns; ++t) z = block(mab, h[sigma[t]], z, heads, relu);
  return z;
}

struct Pooled {
  Vec pooled;
  Mat scores;  // [heads][n]
};

inline Pooled pab(const Vec& seed, const Mat& Kp, const Mat& Vp, const Mat& z, std::size_t heads) {
  const std::size_t d = seed.size(), dk = d / heads;
  Mat k, v;
  for (const auto& x : z) {
    k.push_back(matvec(Kp, x));
    v.push_back(matvec(Vp, x));
  }
  Pooled out{seed, Mat(heads, Vec(z.size()))};
  for (std::size_t hd = 0; hd < heads; ++hd) {
    double z_sum = 0;
    for (std::size_t b = 0; b < z.size(); ++b) {
      double dot = 0;
      for (std::size_t c = hd * dk; c < (hd + 1) * dk; ++c) dot += seed[c] * k[b][c];
      out.scores[hd][b] = std::exp(dot / std::sqrt(double(dk)));
      z_sum += out.scores[hd][b];
    }
    for (std::size_t b = 0; b < z.size(); ++b) {
      out.scores[hd][b] /= z_sum;
      for (std::size_t c = hd * dk; c < (hd + 1) * dk; ++c) out.pooled[c] += out.scores[hd][b] * v[b][c];
    }
  }
  return out;
}

struct Head {
  Vec g1, b1;
  Mat O;
  Vec g2, b2;
  Vec w;
  double b;
};

inline Head read_head(const quan::ParameterStore<double>& s, const std::string& p) {
  return {from_vector(s.at(p + ".norm1.gain").value), from_vector(s.at(p + ".norm1.bias").value),
          from_tensor(s.at(p + ".out").value),        from_vector(s.at(p + ".norm2.gain").value),
          from_vector(s.at(p + ".norm2.bias").value), s.at(p + ".readout.weight").value.values(),
          s.at(p + ".readout.bias").value[0]};
}

inline double head(const Head& w, const Vec& p, bool relu) {
  Vec p1 = layer_norm(p, w.g1, w.b1);
  Vec ff = matvec(w.O, p1);
  for (std::size_t c = 0; c < p1.size(); ++c) p1[c] += relu ? std::max(0.0, ff[c]) : sigmoid(ff[c]);
  Vec p2 = layer_norm(p1, w.g2, w.b2);
  double s = w.b;
  for (std::size_t c = 0; c < p2.size(); ++c) s += w.w[c] * p2[c];
  return sigmoid(s);
}

// Convolution (stride 1, no padding) plus eval-mode batch norm, flattened
// channel-major then row then column.
inline Vec conv(const quan::Snapshot& s, const Mat& filters, std::size_t kernel, const Vec& gamma, const Vec& beta,
                const Vec& mean, const Vec& var) {
  const std::size_t R = s.grid.rows, C = s.grid.cols, Ro = R - kernel + 1, Co = C - kernel + 1;
  Vec out;
  for (std::size_t ch = 0; ch < filters.size(); ++ch)
    for (std::size_t i = 0; i < Ro; ++i)
      for (std::size_t j = 0; j < Co; ++j) {
        double acc = 0;
        for (std::size_t a = 0; a < kernel; ++a)
          for (std::size_t b = 0; b < kernel; ++b) acc += filters[ch][a * kernel + b] * s.at(i + a, j + b);
        out.push_back((acc - mean[ch]) / std::sqrt(var[ch] + 1e-5) * gamma[ch] + beta[ch]);
      }
  return out;
}

inline void randomize(quan::ParameterStore<double>& store, std::uint64_t seed, double scale = 0.7) {
  quan::Rng rng(seed);
  for (auto& p : store) {
    if (!p.trainable) continue;
    for (auto& v : p.value.values()) v = scale * quan::standard_normal(rng);
  }
}

inline quan::SnapshotSet random_set(quan::Grid g, std::size_t n, std::uint64_t seed, double p = 0.5) {
  quan::Rng rng(seed);
  quan::SnapshotSet set;
  for (std::size_t i = 0; i < n; ++i) {
    quan::Snapshot s(g);
    for (auto& b : s.bits) b = quan::bernoulli(rng, p) ? 1 : 0;
    set.push_back(s);
  }
  return set;
}

}  // namespace ref
