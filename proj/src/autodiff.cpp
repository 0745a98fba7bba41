#include "quan/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace quan {

// ---------------------------------------------------------------- ParameterStore

template <typename T>
std::size_t ParameterStore<T>::add(const std::string& name, Shape shape, bool trainable, T fill) {
  if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
  params_.emplace_back(name, Tensor<T>(std::move(shape), fill), trainable);
  by_name_[name] = params_.size() - 1;
  return params_.size() - 1;
}

template <typename T>
std::size_t ParameterStore<T>::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------- Tape

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
CMatMap<T> as_matrix(const Tensor<T>& t) {
  return CMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  require(axis < s.size(), "reduction axis out of range for shape " + shape_string(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

template <typename T>
Var Tape<T>::push(Tensor<T> value, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value));
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = push(p.value);
  nodes_[v.id].param = &p;
  param_nodes_[&p] = v.id;
  return v;
}

template <typename T>
void Tape<T>::backward(Var out) {
  require(out.id < nodes_.size(), "backward: invalid output node");
  require(val(out).size() == 1, "backward: output must hold a single element, got " +
                                    shape_string(val(out).shape()));
  for (std::size_t i = 0; i <= out.id; ++i) nodes_[i].grad = Tensor<T>(nodes_[i].value.shape());
  nodes_[out.id].grad[0] = T(1);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward();
  }
  for (std::size_t i = 0; i <= out.id; ++i) {
    Node& n = nodes_[i];
    if (n.param && n.param->trainable) {
      auto& dst = n.param->grad;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const auto& A = val(a);
  const auto& B = val(b);
  const std::size_t m = trans_a ? A.cols() : A.rows();
  const std::size_t ka = trans_a ? A.rows() : A.cols();
  const std::size_t kb = trans_b ? B.cols() : B.rows();
  const std::size_t n = trans_b ? B.rows() : B.cols();
  require(ka == kb, "matmul: inner dimensions differ (" + shape_string(A.shape()) + " x " +
                        shape_string(B.shape()) + ")");
  Tensor<T> C(Shape{m, n});
  {
    auto Am = as_matrix(A);
    auto Bm = as_matrix(B);
    auto Cm = as_matrix(C);
    if (!trans_a && !trans_b) Cm.noalias() = Am * Bm;
    else if (!trans_a && trans_b) Cm.noalias() = Am * Bm.transpose();
    else if (trans_a && !trans_b) Cm.noalias() = Am.transpose() * Bm;
    else Cm.noalias() = Am.transpose() * Bm.transpose();
  }
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, b, out, trans_a, trans_b] {
    auto dC = as_matrix(g(out));
    auto Am = as_matrix(val(a));
    auto Bm = as_matrix(val(b));
    auto dA = as_matrix(g(a));
    auto dB = as_matrix(g(b));
    if (!trans_a) {
      if (!trans_b) dA.noalias() += dC * Bm.transpose();
      else dA.noalias() += dC * Bm;
    } else {
      if (!trans_b) dA.noalias() += Bm * dC.transpose();
      else dA.noalias() += Bm.transpose() * dC.transpose();
    }
    if (!trans_b) {
      if (!trans_a) dB.noalias() += Am.transpose() * dC;
      else dB.noalias() += Am * dC;
    } else {
      if (!trans_a) dB.noalias() += dC.transpose() * Am;
      else dB.noalias() += dC.transpose() * Am.transpose();
    }
  });
}

template <typename T>
Var Tape<T>::linear(Var x, Var weight, Var bias) {
  Var y = matmul(x, weight, false, true);
  return is_valid(bias) ? add_row(y, bias) : y;
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  require(val(a).shape() == val(b).shape(), "add: shape mismatch " + shape_string(val(a).shape()) +
                                                " vs " + shape_string(val(b).shape()));
  Tensor<T> y = val(a);
  const auto& B = val(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    const auto& d = g(out);
    auto& da = g(a);
    auto& db = g(b);
    for (std::size_t i = 0; i < d.size(); ++i) {
      da[i] += d[i];
      db[i] += d[i];
    }
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  require(val(a).shape() == val(b).shape(), "sub: shape mismatch");
  Tensor<T> y = val(a);
  const auto& B = val(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= B[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    const auto& d = g(out);
    auto& da = g(a);
    auto& db = g(b);
    for (std::size_t i = 0; i < d.size(); ++i) {
      da[i] += d[i];
      db[i] -= d[i];
    }
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  require(val(a).shape() == val(b).shape(), "mul: shape mismatch");
  Tensor<T> y = val(a);
  const auto& B = val(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    const auto& d = g(out);
    const auto& A = val(a);
    const auto& B = val(b);
    auto& da = g(a);
    auto& db = g(b);
    for (std::size_t i = 0; i < d.size(); ++i) {
      da[i] += d[i] * B[i];
      db[i] += d[i] * A[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  Tensor<T> y = val(a);
  for (auto& v : y.values()) v *= s;
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out, s] {
    const auto& d = g(out);
    auto& da = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += s * d[i];
  });
}

template <typename T>
Var Tape<T>::add_row(Var x, Var row) {
  const auto& X = val(x);
  const auto& R = val(row);
  require(R.size() == X.cols(), "add_row: row length " + std::to_string(R.size()) +
                                    " does not match last axis of " + shape_string(X.shape()));
  Tensor<T> y = X;
  const std::size_t n = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += R[c];
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, row, out, n] {
    const auto& d = g(out);
    auto& dx = g(x);
    auto& dr = g(row);
    for (std::size_t i = 0; i < d.size(); ++i) {
      dx[i] += d[i];
      dr[i % n] += d[i];
    }
  });
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  Tensor<T> y = val(a);
  for (auto& v : y.values()) v = T(1) / (T(1) + std::exp(-v));
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    const auto& d = g(out);
    const auto& Y = val(out);
    auto& da = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * Y[i] * (T(1) - Y[i]);
  });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Tensor<T> y = val(a);
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    const auto& d = g(out);
    const auto& A = val(a);
    auto& da = g(a);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (A[i] > T(0)) da[i] += d[i];
  });
}

template <typename T>
Var Tape<T>::softmax_rows(Var logits) {
  const auto& X = val(logits);
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (!std::isfinite(X[i])) {
      std::ostringstream os;
      os << "softmax_rows: non-finite logit at flat index " << i << " (row " << i / X.cols() << ", column "
         << i % X.cols() << ")";
      throw Error(os.str());
    }
  }
  Tensor<T> y = X;
  const std::size_t n = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    T* row = y.data() + r * n;
    T mx = *std::max_element(row, row + n);
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= total;
  }
  Var out{nodes_.size()};
  return push(std::move(y), [this, logits, out, n] {
    const auto& d = g(out);
    const auto& Y = val(out);
    auto& dx = g(logits);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      const std::size_t o = r * n;
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += d[o + c] * Y[o + c];
      for (std::size_t c = 0; c < n; ++c) dx[o + c] += Y[o + c] * (d[o + c] - dot);
    }
  });
}

template <typename T>
Var Tape<T>::attention(Var q, Var k, Var v, std::size_t sets, std::size_t heads, Tensor<T>* probs) {
  using Stride = Eigen::OuterStride<>;
  using CBlock = Eigen::Map<const RowMat<T>, 0, Stride>;
  using Block = Eigen::Map<RowMat<T>, 0, Stride>;
  const auto& Q = val(q);
  const auto& K = val(k);
  const auto& V = val(v);
  const std::size_t d = Q.cols();
  require(sets > 0 && heads > 0, "attention: sets and heads must be positive");
  require(K.cols() == d && V.cols() == d, "attention: query, key and value widths differ");
  require(K.rows() == V.rows(), "attention: key and value row counts differ");
  require(d % heads == 0, "attention: width " + std::to_string(d) + " is not divisible by " +
                              std::to_string(heads) + " heads");
  require(Q.rows() % sets == 0 && K.rows() % sets == 0, "attention: row counts are not divisible by the set count");
  const std::size_t nq = Q.rows() / sets, nk = K.rows() / sets, dk = d / heads;
  const T scale = T(1) / std::sqrt(T(dk));
  const auto ei = [](std::size_t n) { return static_cast<Eigen::Index>(n); };

  auto weights = std::make_shared<Tensor<T>>(Shape{sets, heads, nq, nk});
  Tensor<T> y(Shape{sets * nq, d});
  for (std::size_t s = 0; s < sets; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      CBlock qh(Q.data() + s * nq * d + h * dk, ei(nq), ei(dk), Stride(ei(d)));
      CBlock kh(K.data() + s * nk * d + h * dk, ei(nk), ei(dk), Stride(ei(d)));
      CBlock vh(V.data() + s * nk * d + h * dk, ei(nk), ei(dk), Stride(ei(d)));
      MatMap<T> a(weights->data() + (s * heads + h) * nq * nk, ei(nq), ei(nk));
      a.noalias() = (qh * kh.transpose()) * scale;
      for (std::size_t r = 0; r < nq; ++r) {
        auto row = a.row(ei(r));
        if (!row.allFinite()) {
          std::ostringstream os;
          os << "attention: non-finite logit in set " << s << ", head " << h << ", query row " << r;
          throw Error(os.str());
        }
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      Block yh(y.data() + s * nq * d + h * dk, ei(nq), ei(dk), Stride(ei(d)));
      yh.noalias() = a * vh;
    }
  }
  if (probs) *probs = *weights;
  Var out{nodes_.size()};
  return push(std::move(y), [this, q, k, v, out, sets, heads, nq, nk, d, dk, scale, weights, ei] {
    const auto& dY = g(out);
    const auto& Q = val(q);
    const auto& K = val(k);
    const auto& V = val(v);
    auto& dQ = g(q);
    auto& dK = g(k);
    auto& dV = g(v);
    RowMat<T> da(ei(nq), ei(nk));
    for (std::size_t s = 0; s < sets; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t qo = s * nq * d + h * dk, ko = s * nk * d + h * dk;
        CBlock qh(Q.data() + qo, ei(nq), ei(dk), Stride(ei(d)));
        CBlock kh(K.data() + ko, ei(nk), ei(dk), Stride(ei(d)));
        CBlock vh(V.data() + ko, ei(nk), ei(dk), Stride(ei(d)));
        CBlock dyh(dY.data() + qo, ei(nq), ei(dk), Stride(ei(d)));
        CMatMap<T> a(weights->data() + (s * heads + h) * nq * nk, ei(nq), ei(nk));
        Block dqh(dQ.data() + qo, ei(nq), ei(dk), Stride(ei(d)));
        Block dkh(dK.data() + ko, ei(nk), ei(dk), Stride(ei(d)));
        Block dvh(dV.data() + ko, ei(nk), ei(dk), Stride(ei(d)));
        dvh.noalias() += a.transpose() * dyh;
        da.noalias() = dyh * vh.transpose();
        for (std::size_t r = 0; r < nq; ++r) {
          const T dot = da.row(ei(r)).dot(a.row(ei(r)));
          da.row(ei(r)) = (a.row(ei(r)).array() * (da.row(ei(r)).array() - dot)).matrix() * scale;
        }
        dqh.noalias() += da * kh;
        dkh.noalias() += da.transpose() * qh;
      }
    }
  });
}

template <typename T>
Var Tape<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const auto& X = val(x);
  const std::size_t n = X.cols();
  require(val(gain).size() == n && val(bias).size() == n, "layer_norm: gain/bias length must equal " +
                                                               std::to_string(n));
  const std::size_t rows = X.rows();
  Tensor<T> xhat(X.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += xr[c];
    mu /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= T(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) xhat[r * n + c] = (xr[c] - mu) * inv_std[r];
  }
  Tensor<T> y = xhat;
  const auto& G = val(gain);
  const auto& B = val(bias);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] * G[i % n] + B[i % n];
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, gain, bias, out, n, rows, xhat = std::move(xhat),
                             inv_std = std::move(inv_std)] {
    const auto& d = g(out);
    const auto& G = val(gain);
    auto& dx = g(x);
    auto& dg = g(gain);
    auto& db = g(bias);
    std::vector<T> dxh(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * n;
      T m1 = 0, m2 = 0;
      for (std::size_t c = 0; c < n; ++c) {
        dg[c] += d[o + c] * xhat[o + c];
        db[c] += d[o + c];
        dxh[c] = d[o + c] * G[c];
        m1 += dxh[c];
        m2 += dxh[c] * xhat[o + c];
      }
      m1 /= T(n);
      m2 /= T(n);
      for (std::size_t c = 0; c < n; ++c) dx[o + c] += inv_std[r] * (dxh[c] - m1 - xhat[o + c] * m2);
    }
  });
}

template <typename T>
Var Tape<T>::batch_norm(Var x, Var gamma, Var beta, Parameter<T>& running_mean,
                        Parameter<T>& running_var, bool train, T momentum, T eps) {
  const auto& X = val(x);
  const std::size_t rows = X.rows();
  const std::size_t ch = X.cols();
  require(val(gamma).size() == ch && val(beta).size() == ch && running_mean.value.size() == ch &&
              running_var.value.size() == ch,
          "batch_norm: per-channel tensors must have length " + std::to_string(ch));
  std::vector<T> mu(ch, T(0)), inv_std(ch);
  if (train) {
    std::vector<T> var(ch, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mu[c] += X[r * ch + c];
    for (auto& m : mu) m /= T(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        T dlt = X[r * ch + c] - mu[c];
        var[c] += dlt * dlt;
      }
    for (std::size_t c = 0; c < ch; ++c) {
      T biased = var[c] / T(rows);
      T unbiased = rows > 1 ? var[c] / T(rows - 1) : biased;
      inv_std[c] = T(1) / std::sqrt(biased + eps);
      running_mean.value[c] = (T(1) - momentum) * running_mean.value[c] + momentum * mu[c];
      running_var.value[c] = (T(1) - momentum) * running_var.value[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = running_mean.value[c];
      inv_std[c] = T(1) / std::sqrt(running_var.value[c] + eps);
    }
  }
  Tensor<T> xhat(X.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) xhat[r * ch + c] = (X[r * ch + c] - mu[c]) * inv_std[c];
  Tensor<T> y = xhat;
  const auto& G = val(gamma);
  const auto& B = val(beta);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] * G[i % ch] + B[i % ch];
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, gamma, beta, out, rows, ch, train, xhat = std::move(xhat),
                             inv_std = std::move(inv_std)] {
    const auto& d = g(out);
    const auto& G = val(gamma);
    auto& dx = g(x);
    auto& dg = g(gamma);
    auto& db = g(beta);
    std::vector<T> m1(ch, T(0)), m2(ch, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = r * ch + c;
        dg[c] += d[i] * xhat[i];
        db[c] += d[i];
        const T dxh = d[i] * G[c];
        m1[c] += dxh;
        m2[c] += dxh * xhat[i];
      }
    for (std::size_t c = 0; c < ch; ++c) {
      m1[c] /= T(rows);
      m2[c] /= T(rows);
    }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = r * ch + c;
        const T dxh = d[i] * G[c];
        dx[i] += train ? inv_std[c] * (dxh - m1[c] - xhat[i] * m2[c]) : inv_std[c] * dxh;
      }
  });
}

template <typename T>
Var Tape<T>::sum(Var x, std::size_t axis) {
  const auto& X = val(x);
  const AxisSplit s = split_axis(X.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < X.rank(); ++i)
    if (i != axis) out_shape.push_back(X.dim(i));
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) y[o * s.inner + i] += X[(o * s.extent + e) * s.inner + i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, out, s] {
    const auto& d = g(out);
    auto& dx = g(x);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i) dx[(o * s.extent + e) * s.inner + i] += d[o * s.inner + i];
  });
}

template <typename T>
Var Tape<T>::mean(Var x, std::size_t axis) {
  const std::size_t extent = val(x).dim(axis);
  return scale(sum(x, axis), T(1) / T(extent));
}

template <typename T>
Var Tape<T>::sum_all(Var x) {
  const auto& X = val(x);
  T total = 0;
  for (auto v : X.values()) total += v;
  Var out{nodes_.size()};
  return push(Tensor<T>::scalar(total), [this, x, out] {
    const T d = g(out)[0];
    for (auto& v : g(x).values()) v += d;
  });
}

template <typename T>
Var Tape<T>::reshape(Var x, Shape shape) {
  Tensor<T> y = val(x).reshaped(std::move(shape));
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, out] {
    const auto& d = g(out);
    auto& dx = g(x);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
  });
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = val(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    require(val(p).rows() == rows, "concat_cols: row counts differ");
    widths.push_back(val(p).cols());
    total += widths.back();
  }
  Tensor<T> y(Shape{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& P = val(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(P.data() + r * widths[k], widths[k], y.data() + r * total + off);
    off += widths[k];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  Var out{nodes_.size()};
  return push(std::move(y), [this, ins = std::move(ins), widths = std::move(widths), out, rows, total] {
    const auto& d = g(out);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      auto& dp = g(ins[k]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < widths[k]; ++c) dp[r * widths[k] + c] += d[r * total + off + c];
      off += widths[k];
    }
  });
}

template <typename T>
Var Tape<T>::slice_cols(Var x, std::size_t begin, std::size_t end) {
  const auto& X = val(x);
  const std::size_t n = X.cols();
  require(begin < end && end <= n, "slice_cols: invalid column range");
  const std::size_t rows = X.rows();
  const std::size_t w = end - begin;
  Tensor<T> y(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.data() + r * n + begin, w, y.data() + r * w);
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, out, rows, n, w, begin] {
    const auto& d = g(out);
    auto& dx = g(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) dx[r * n + begin + c] += d[r * w + c];
  });
}

template <typename T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = val(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    require(val(p).cols() == cols, "concat_rows: column counts differ");
    rows += val(p).rows();
  }
  Tensor<T> y(Shape{rows, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& P = val(p);
    std::copy(P.values().begin(), P.values().end(), y.data() + off);
    off += P.size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  Var out{nodes_.size()};
  return push(std::move(y), [this, ins = std::move(ins), out] {
    const auto& d = g(out);
    std::size_t off = 0;
    for (Var p : ins) {
      auto& dp = g(p);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += d[off + i];
      off += dp.size();
    }
  });
}

template <typename T>
Var Tape<T>::gather_rows(Var x, std::span<const std::size_t> rows) {
  const auto& X = val(x);
  const std::size_t n = X.cols();
  require(!rows.empty(), "gather_rows: empty row selection");
  for (auto r : rows) require(r < X.rows(), "gather_rows: row index out of range");
  Tensor<T> y(Shape{rows.size(), n});
  for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(X.data() + rows[k] * n, n, y.data() + k * n);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, out, n, idx = std::move(idx)] {
    const auto& d = g(out);
    auto& dx = g(x);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t c = 0; c < n; ++c) dx[idx[k] * n + c] += d[k * n + c];
  });
}

template <typename T>
Var Tape<T>::gather(Var x, std::vector<std::size_t> index, Shape shape) {
  const auto& X = val(x);
  require(shape_numel(shape) == index.size(), "gather: index count does not match output shape");
  Tensor<T> y(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < X.size(), "gather: index out of range");
    y[i] = X[index[i]];
  }
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, out, index = std::move(index)] {
    const auto& d = g(out);
    auto& dx = g(x);
    for (std::size_t i = 0; i < index.size(); ++i) dx[index[i]] += d[i];
  });
}

template <typename T>
Var Tape<T>::binary_cross_entropy(Var y, std::span<const T> labels) {
  const auto& Y = val(y);
  require(Y.size() == labels.size(), "binary_cross_entropy: " + std::to_string(Y.size()) +
                                         " confidences for " + std::to_string(labels.size()) + " labels");
  for (T l : labels)
    if (l != T(0) && l != T(1)) throw ConfigError("binary_cross_entropy: labels must be 0 or 1");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  T total = 0;
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const T c = std::clamp(Y[i], lo, hi);
    total -= labels[i] * std::log(c) + (T(1) - labels[i]) * std::log(T(1) - c);
  }
  const T n = T(Y.size());
  std::vector<T> lab(labels.begin(), labels.end());
  Var out{nodes_.size()};
  return push(Tensor<T>::scalar(total / n), [this, y, out, lab = std::move(lab), n, lo, hi] {
    const T d = g(out)[0] / n;
    const auto& Y = val(y);
    auto& dy = g(y);
    for (std::size_t i = 0; i < Y.size(); ++i) {
      if (Y[i] < lo || Y[i] > hi) continue;
      dy[i] += d * (-(lab[i] / Y[i]) + (T(1) - lab[i]) / (T(1) - Y[i]));
    }
  });
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace quan
