#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quan/tensor.hpp"

namespace quan {

/// A learnable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Ordered, name-addressable collection of parameters. Model blocks refer to
/// entries by index so the store can be copied with value semantics.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(const std::string& name, Shape shape, bool trainable = true, T fill = T(0));
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  Parameter<T>& at(const std::string& name) { return params_[index_of(name)]; }
  const Parameter<T>& at(const std::string& name) const { return params_[index_of(name)]; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Number of scalar entries across trainable parameters.
  std::size_t trainable_count() const;

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape over the fixed primitive set used by the models.
///
/// Every primitive evaluates its forward value eagerly and records a closure
/// that propagates the output gradient into its inputs. `backward` walks the
/// tape in reverse and finally adds the gradients of parameter leaves into
/// `Parameter::grad` (gradients accumulate; callers zero them explicitly).
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value);
  /// Leaf bound to a parameter. Repeated calls with the same parameter return the same node.
  Var parameter(Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a single-element output and propagates.
  void backward(Var out);

  // Linear algebra. Operands are treated as 2-D matrices.
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  /// x W^T + b for x [n, in], W [out, in], b [out]; pass an invalid Var to omit the bias.
  Var linear(Var x, Var weight, Var bias = Var{});

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  /// x [..., n] + row [n] broadcast over leading axes.
  Var add_row(Var x, Var row);
  Var sigmoid(Var a);
  Var relu(Var a);

  // Normalisation.
  Var softmax_rows(Var logits);
  /// Multi-head scaled dot-product attention over `sets` independent blocks.
  /// q is [sets*nq, d]; k and v are [sets*nk, d]; d splits into `heads` slices
  /// of width dk. Each block and head computes softmax(q k^T / sqrt(dk)) v and
  /// the heads are concatenated back to width d. When `probs` is given it
  /// receives the attention weights as [sets, heads, nq, nk].
  Var attention(Var q, Var k, Var v, std::size_t sets, std::size_t heads, Tensor<T>* probs = nullptr);
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
  /// Normalises each column of x [rows, channels] over its rows.
  Var batch_norm(Var x, Var gamma, Var beta, Parameter<T>& running_mean, Parameter<T>& running_var,
                 bool train, T momentum = T(0.1), T eps = T(1e-5));

  // Reductions and layout.
  Var sum(Var x, std::size_t axis);
  Var mean(Var x, std::size_t axis);
  Var sum_all(Var x);
  Var reshape(Var x, Shape shape);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var x, std::size_t begin, std::size_t end);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var x, std::span<const std::size_t> rows);
  /// out.flat[i] = x.flat[index[i]]; gradients scatter-add back.
  Var gather(Var x, std::vector<std::size_t> index, Shape shape);

  /// Mean two-term binary cross entropy of confidences y against 0/1 labels,
  /// with y clamped to [1e-7, 1 - 1e-7].
  Var binary_cross_entropy(Var y, std::span<const T> labels);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
  };

  Var push(Tensor<T> value, std::function<void()> backward = {});
  Node& node(Var v) { return nodes_.at(v.id); }
  Tensor<T>& g(Var v) { return nodes_[v.id].grad; }
  const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

inline bool is_valid(Var v) { return v.id != static_cast<std::size_t>(-1); }

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace quan
