#pragma once

// Reverse-mode differentiation over row-major matrices.
//
// A Tape records every operation applied to its variables. Values are
// computed eagerly; backward() walks the record in reverse and accumulates
// gradients into every node that depends on a parameter. Operations are
// coarse (a fused attention, a layer norm) so the tape stays short.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vvla/tensor.hpp"

namespace vvla {

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const RowMatrix<Scalar>& value() const;
  const RowMatrix<Scalar>& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = RowMatrix<Scalar>;
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value);
  Var<Scalar> parameter(const std::string& name, Matrix value);

  // Registers a node produced by an operation. `parents` are the node ids the
  // backward closure reads gradients into; the node only keeps its closure if
  // one of them requires a gradient.
  Var<Scalar> record(Matrix value, std::initializer_list<int> parents, Backward backward);
  Var<Scalar> record(Matrix value, const std::vector<int>& parents, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Gradient accumulator of a node, allocated to zeros on first use.
  Matrix& grad_accumulator(int id);

  void backward(const Var<Scalar>& loss);

  // Gradients of every parameter leaf, keyed by parameter name.
  ParamStore<Scalar> parameter_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    std::string param_name;
  };
  std::vector<Node> nodes_;
};

// Row-to-condition map used by the adaptive normalization ops: row r of the
// activation is modulated by row map[r] of the modulation matrix.
using RowMap = std::vector<int>;

// Attention visibility. Queries in [0, restricted_queries) only see keys in
// [0, visible_keys); all remaining queries see every key. restricted_queries
// == 0 is plain bidirectional attention.
struct AttentionMask {
  Index restricted_queries = 0;
  Index visible_keys = 0;
};

template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
// a * w + bias (bias is 1 x cols).
template <typename Scalar> Var<Scalar> linear(const Var<Scalar>& a, const Var<Scalar>& w, const Var<Scalar>& bias);
template <typename Scalar> Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> operator*(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> gelu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> silu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> layer_norm(const Var<Scalar>& a, Scalar eps = Scalar(1e-6));

// out[r] = src[index[r]]
template <typename Scalar> Var<Scalar> gather_rows(const Var<Scalar>& src, const std::vector<int>& index);

// Builds a matrix row by row from several sources: out[r] = sources[map[r].first][map[r].second].
template <typename Scalar>
Var<Scalar> assemble_rows(const std::vector<Var<Scalar>>& sources, const std::vector<std::pair<int, int>>& map);

// out[r] = x[r] + table[index[r]]
template <typename Scalar>
Var<Scalar> add_indexed_rows(const Var<Scalar>& x, const Var<Scalar>& table, const std::vector<int>& index);

// out[r] = x[r] * (1 + mod[map[r], scale_col:+d]) + mod[map[r], shift_col:+d]
template <typename Scalar>
Var<Scalar> modulate(const Var<Scalar>& x, const Var<Scalar>& mod, Index shift_col, Index scale_col,
                     const RowMap& map);

// out[r] = x[r] + mod[map[r], gate_col:+d] * y[r]
template <typename Scalar>
Var<Scalar> gated_residual(const Var<Scalar>& x, const Var<Scalar>& y, const Var<Scalar>& mod, Index gate_col,
                           const RowMap& map);

// Multi-head scaled dot-product attention over packed qkv rows
// ([q | k | v], each d wide). Rows are grouped in consecutive sequences of
// length seq_len.
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& qkv, int n_heads, Index seq_len, const AttentionMask& mask);

// Inverted dropout with a mask drawn from `seed`. p == 0 returns the input.
template <typename Scalar> Var<Scalar> dropout(const Var<Scalar>& a, double p, std::uint64_t seed);

// Weighted mean squared error against a constant target. Row r counts with
// weight row_weight[r] (0 drops it); the mean is over the weighted elements.
template <typename Scalar>
Var<Scalar> masked_mse(const Var<Scalar>& pred, const RowMatrix<Scalar>& target, const std::vector<Scalar>& row_weight);

template <typename Scalar>
const RowMatrix<Scalar>& Var<Scalar>::value() const {
  return tape->value(id);
}

template <typename Scalar>
const RowMatrix<Scalar>& Var<Scalar>::grad() const {
  return tape->grad(id);
}

}  // namespace vvla
