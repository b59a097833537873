#include "vvla/autodiff.hpp"

#include <cmath>
#include <random>

namespace vvla {

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::parameter(const std::string& name, Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, name});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Matrix value, std::initializer_list<int> parents, Backward backward) {
  return record(std::move(value), std::vector<int>(parents), std::move(backward));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Matrix value, const std::vector<int>& parents, Backward backward) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[p].requires_grad;
  Node node{std::move(value), {}, {}, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
typename Tape<Scalar>::Matrix& Tape<Scalar>::grad_accumulator(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Scalar>
void Tape<Scalar>::backward(const Var<Scalar>& loss) {
  if (loss.tape != this) throw UsageError("loss belongs to a different tape");
  if (value(loss.id).size() != 1) throw UsageError("backward() needs a scalar loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_accumulator(loss.id).setOnes();
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

template <typename Scalar>
ParamStore<Scalar> Tape<Scalar>::parameter_grads() const {
  ParamStore<Scalar> out;
  for (const auto& n : nodes_) {
    if (n.param_name.empty()) continue;
    Matrix g = n.grad.size() ? n.grad : Matrix::Zero(n.value.rows(), n.value.cols());
    if (out.contains(n.param_name)) {
      out.at(n.param_name).matrix() += g;
    } else {
      out.add(n.param_name, Tensor<Scalar>::from_matrix(g));
    }
  }
  return out;
}

namespace {

template <typename Scalar>
void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape != b.tape || a.tape == nullptr) throw UsageError("variables live on different tapes");
}

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw UsageError("matmul: inner extents differ");
  RowMatrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_accumulator(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_accumulator(ib).noalias() += t.value(ia).transpose() * g;
  });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& a, const Var<Scalar>& w, const Var<Scalar>& bias) {
  check_same_tape(a, w);
  check_same_tape(a, bias);
  if (a.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols())
    throw UsageError("linear: shape mismatch");
  RowMatrix<Scalar> out(a.rows(), w.cols());
  out.noalias() = a.value() * w.value();
  out.rowwise() += bias.value().row(0);
  const int ia = a.id, iw = w.id, ib = bias.id;
  return a.tape->record(std::move(out), {ia, iw, ib}, [ia, iw, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_accumulator(ia).noalias() += g * t.value(iw).transpose();
    if (t.requires_grad(iw)) t.grad_accumulator(iw).noalias() += t.value(ia).transpose() * g;
    if (t.requires_grad(ib)) t.grad_accumulator(ib).row(0) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("add: shape mismatch");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    if (t.requires_grad(ia)) t.grad_accumulator(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad_accumulator(ib) += t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("sub: shape mismatch");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    if (t.requires_grad(ia)) t.grad_accumulator(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad_accumulator(ib) -= t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id;
  return a.tape->record(a.value() * s, {ia}, [ia, s](Tape<Scalar>& t, int self) {
    t.grad_accumulator(ia) += t.grad(self) * s;
  });
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("cwise_product: shape mismatch");
  const int ia = a.id, ib = b.id;
  RowMatrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    if (t.requires_grad(ia)) t.grad_accumulator(ia) += t.grad(self).cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_accumulator(ib) += t.grad(self).cwiseProduct(t.value(ia));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  RowMatrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<Scalar>& t, int self) {
    t.grad_accumulator(ia).array() += t.grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  const Scalar kC = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar kA = Scalar(0.044715);
  const auto& x = a.value();
  RowMatrix<Scalar> th = (kC * (x.array() + kA * x.array().cube())).tanh().matrix();
  RowMatrix<Scalar> out = (Scalar(0.5) * x.array() * (Scalar(1) + th.array())).matrix();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, kC, kA, th = std::move(th)](Tape<Scalar>& t, int self) {
    const auto x = t.value(ia).array();
    auto d = Scalar(0.5) * (Scalar(1) + th.array()) +
             Scalar(0.5) * x * (Scalar(1) - th.array().square()) * kC * (Scalar(1) + Scalar(3) * kA * x.square());
    t.grad_accumulator(ia).array() += t.grad(self).array() * d;
  });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& a) {
  const auto& x = a.value();
  RowMatrix<Scalar> sig = (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
  RowMatrix<Scalar> out = x.cwiseProduct(sig);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, sig = std::move(sig)](Tape<Scalar>& t, int self) {
    const auto x = t.value(ia).array();
    auto d = sig.array() * (Scalar(1) + x * (Scalar(1) - sig.array()));
    t.grad_accumulator(ia).array() += t.grad(self).array() * d;
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& a, Scalar eps) {
  const auto& x = a.value();
  const Index n = x.rows(), d = x.cols();
  RowMatrix<Scalar> xhat(n, d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const Scalar mean = x.row(r).mean();
    auto centered = x.row(r).array() - mean;
    const Scalar var = centered.square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  const int ia = a.id;
  RowMatrix<Scalar> out = xhat;
  return a.tape->record(std::move(out), {ia},
                        [ia, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, int self) {
                          const auto& g = t.grad(self);
                          auto& ga = t.grad_accumulator(ia);
                          for (Index r = 0; r < g.rows(); ++r) {
                            const Scalar gm = g.row(r).mean();
                            const Scalar gx = g.row(r).dot(xhat.row(r)) / Scalar(g.cols());
                            ga.row(r).array() +=
                                inv_std(r) * (g.row(r).array() - gm - xhat.row(r).array() * gx);
                          }
                        });
}

template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& src, const std::vector<int>& index) {
  const auto& s = src.value();
  RowMatrix<Scalar> out(static_cast<Index>(index.size()), s.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= s.rows()) throw UsageError("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = s.row(index[r]);
  }
  const int is = src.id;
  return src.tape->record(std::move(out), {is}, [is, index](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    auto& gs = t.grad_accumulator(is);
    for (std::size_t r = 0; r < index.size(); ++r) gs.row(index[r]) += g.row(static_cast<Index>(r));
  });
}

template <typename Scalar>
Var<Scalar> assemble_rows(const std::vector<Var<Scalar>>& sources, const std::vector<std::pair<int, int>>& map) {
  if (sources.empty()) throw UsageError("assemble_rows: no sources");
  const Index cols = sources.front().cols();
  std::vector<int> ids;
  for (const auto& s : sources) {
    check_same_tape(sources.front(), s);
    if (s.cols() != cols) throw UsageError("assemble_rows: column mismatch");
    ids.push_back(s.id);
  }
  RowMatrix<Scalar> out(static_cast<Index>(map.size()), cols);
  for (std::size_t r = 0; r < map.size(); ++r) {
    const auto [src, row] = map[r];
    const auto& v = sources.at(static_cast<std::size_t>(src)).value();
    if (row < 0 || row >= v.rows()) throw UsageError("assemble_rows: row out of range");
    out.row(static_cast<Index>(r)) = v.row(row);
  }
  Tape<Scalar>* tape = sources.front().tape;
  return tape->record(std::move(out), ids, [ids, map](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t r = 0; r < map.size(); ++r) {
      const int id = ids[static_cast<std::size_t>(map[r].first)];
      if (t.requires_grad(id)) t.grad_accumulator(id).row(map[r].second) += g.row(static_cast<Index>(r));
    }
  });
}

template <typename Scalar>
Var<Scalar> add_indexed_rows(const Var<Scalar>& x, const Var<Scalar>& table, const std::vector<int>& index) {
  check_same_tape(x, table);
  if (static_cast<Index>(index.size()) != x.rows() || x.cols() != table.cols())
    throw UsageError("add_indexed_rows: shape mismatch");
  RowMatrix<Scalar> out = x.value();
  const auto& tab = table.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const int k = index[static_cast<std::size_t>(r)];
    if (k < 0 || k >= tab.rows()) throw UsageError("add_indexed_rows: index out of range");
    out.row(r) += tab.row(k);
  }
  const int ix = x.id, it = table.id;
  return x.tape->record(std::move(out), {ix, it}, [ix, it, index](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.grad_accumulator(ix) += g;
    if (t.requires_grad(it)) {
      auto& gt = t.grad_accumulator(it);
      for (Index r = 0; r < g.rows(); ++r) gt.row(index[static_cast<std::size_t>(r)]) += g.row(r);
    }
  });
}

template <typename Scalar>
Var<Scalar> modulate(const Var<Scalar>& x, const Var<Scalar>& mod, Index shift_col, Index scale_col,
                     const RowMap& map) {
  check_same_tape(x, mod);
  const Index d = x.cols();
  if (static_cast<Index>(map.size()) != x.rows() || shift_col + d > mod.cols() || scale_col + d > mod.cols())
    throw UsageError("modulate: shape mismatch");
  const auto& xv = x.value();
  const auto& m = mod.value();
  RowMatrix<Scalar> out(xv.rows(), d);
  for (Index r = 0; r < xv.rows(); ++r) {
    const int c = map[static_cast<std::size_t>(r)];
    out.row(r).array() = xv.row(r).array() * (Scalar(1) + m.row(c).segment(scale_col, d).array()) +
                         m.row(c).segment(shift_col, d).array();
  }
  const int ix = x.id, im = mod.id;
  return x.tape->record(std::move(out), {ix, im}, [ix, im, shift_col, scale_col, map](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& m = t.value(im);
    const Index d = g.cols();
    const bool gx = t.requires_grad(ix), gm = t.requires_grad(im);
    for (Index r = 0; r < g.rows(); ++r) {
      const int c = map[static_cast<std::size_t>(r)];
      if (gx) t.grad_accumulator(ix).row(r).array() += g.row(r).array() * (Scalar(1) + m.row(c).segment(scale_col, d).array());
      if (gm) {
        auto& gmod = t.grad_accumulator(im);
        gmod.row(c).segment(scale_col, d).array() += g.row(r).array() * xv.row(r).array();
        gmod.row(c).segment(shift_col, d) += g.row(r);
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> gated_residual(const Var<Scalar>& x, const Var<Scalar>& y, const Var<Scalar>& mod, Index gate_col,
                           const RowMap& map) {
  check_same_tape(x, y);
  check_same_tape(x, mod);
  const Index d = x.cols();
  if (y.rows() != x.rows() || y.cols() != d || static_cast<Index>(map.size()) != x.rows() || gate_col + d > mod.cols())
    throw UsageError("gated_residual: shape mismatch");
  const auto& m = mod.value();
  RowMatrix<Scalar> out = x.value();
  const auto& yv = y.value();
  for (Index r = 0; r < out.rows(); ++r) {
    out.row(r).array() += m.row(map[static_cast<std::size_t>(r)]).segment(gate_col, d).array() * yv.row(r).array();
  }
  const int ix = x.id, iy = y.id, im = mod.id;
  return x.tape->record(std::move(out), {ix, iy, im}, [ix, iy, im, gate_col, map](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    const Index d = g.cols();
    if (t.requires_grad(ix)) t.grad_accumulator(ix) += g;
    const auto& m = t.value(im);
    const auto& yv = t.value(iy);
    const bool gy = t.requires_grad(iy), gm = t.requires_grad(im);
    for (Index r = 0; r < g.rows(); ++r) {
      const int c = map[static_cast<std::size_t>(r)];
      if (gy) t.grad_accumulator(iy).row(r).array() += g.row(r).array() * m.row(c).segment(gate_col, d).array();
      if (gm) t.grad_accumulator(im).row(c).segment(gate_col, d).array() += g.row(r).array() * yv.row(r).array();
    }
  });
}

namespace {

template <typename Derived>
void softmax_rows(Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  for (Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const Scalar mx = row.maxCoeff();
    row.array() = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& qkv, int n_heads, Index seq_len, const AttentionMask& mask) {
  const auto& in = qkv.value();
  if (in.cols() % (3 * n_heads) != 0 || seq_len <= 0 || in.rows() % seq_len != 0)
    throw UsageError("attention: shape mismatch");
  const Index d = in.cols() / 3, dh = d / n_heads, L = seq_len, batch = in.rows() / L;
  const Index R = mask.restricted_queries, Vk = mask.visible_keys;
  if (R < 0 || R > L || (R > 0 && (Vk <= 0 || Vk > L))) throw UsageError("attention: bad mask");
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));

  auto probs = std::make_shared<std::vector<RowMatrix<Scalar>>>(static_cast<std::size_t>(batch * n_heads));
  RowMatrix<Scalar> out(in.rows(), d);
  for (Index b = 0; b < batch; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      auto q = in.block(b * L, h * dh, L, dh);
      auto k = in.block(b * L, d + h * dh, L, dh);
      auto v = in.block(b * L, 2 * d + h * dh, L, dh);
      auto o = out.block(b * L, h * dh, L, dh);
      RowMatrix<Scalar>& p = (*probs)[static_cast<std::size_t>(b * n_heads + h)];
      p.setZero(L, L);
      if (R > 0) {
        auto top = p.block(0, 0, R, Vk);
        top.noalias() = (q.topRows(R) * k.topRows(Vk).transpose()) * scale;
        softmax_rows(top);
        o.topRows(R).noalias() = top * v.topRows(Vk);
      }
      if (R < L) {
        auto rest = p.bottomRows(L - R);
        rest.noalias() = (q.bottomRows(L - R) * k.transpose()) * scale;
        softmax_rows(rest);
        o.bottomRows(L - R).noalias() = rest * v;
      }
    }
  }
  const int iq = qkv.id;
  return qkv.tape->record(std::move(out), {iq}, [iq, n_heads, L, probs](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    const auto& in = t.value(iq);
    auto& gin = t.grad_accumulator(iq);
    const Index d = g.cols(), dh = d / n_heads, batch = g.rows() / L;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    RowMatrix<Scalar> dp(L, L);
    for (Index b = 0; b < batch; ++b) {
      for (int h = 0; h < n_heads; ++h) {
        const auto& p = (*probs)[static_cast<std::size_t>(b * n_heads + h)];
        auto q = in.block(b * L, h * dh, L, dh);
        auto k = in.block(b * L, d + h * dh, L, dh);
        auto v = in.block(b * L, 2 * d + h * dh, L, dh);
        auto go = g.block(b * L, h * dh, L, dh);
        gin.block(b * L, 2 * d + h * dh, L, dh).noalias() += p.transpose() * go;
        dp.noalias() = go * v.transpose();
        for (Index r = 0; r < L; ++r) {
          const Scalar dot = dp.row(r).dot(p.row(r));
          dp.row(r).array() = p.row(r).array() * (dp.row(r).array() - dot);
        }
        gin.block(b * L, h * dh, L, dh).noalias() += (dp * k) * scale;
        gin.block(b * L, d + h * dh, L, dh).noalias() += (dp.transpose() * q) * scale;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& a, double p, std::uint64_t seed) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw UsageError("dropout probability must be < 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  RowMatrix<Scalar> mask(a.rows(), a.cols());
  const Scalar s = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : Scalar(0);
  RowMatrix<Scalar> out = a.value().cwiseProduct(mask);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, mask = std::move(mask)](Tape<Scalar>& t, int self) {
    t.grad_accumulator(ia) += t.grad(self).cwiseProduct(mask);
  });
}

template <typename Scalar>
Var<Scalar> masked_mse(const Var<Scalar>& pred, const RowMatrix<Scalar>& target, const std::vector<Scalar>& row_weight) {
  const auto& p = pred.value();
  if (p.rows() != target.rows() || p.cols() != target.cols() || static_cast<Index>(row_weight.size()) != p.rows())
    throw UsageError("masked_mse: shape mismatch");
  Scalar wsum = 0;
  for (Scalar w : row_weight) wsum += w;
  const Scalar denom = wsum * Scalar(p.cols());
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(1, 1);
  if (denom > 0) {
    Scalar acc = 0;
    for (Index r = 0; r < p.rows(); ++r) {
      if (row_weight[static_cast<std::size_t>(r)] == 0) continue;
      acc += row_weight[static_cast<std::size_t>(r)] * (p.row(r) - target.row(r)).squaredNorm();
    }
    out(0, 0) = acc / denom;
  }
  const int ip = pred.id;
  return pred.tape->record(std::move(out), {ip}, [ip, target, row_weight, denom](Tape<Scalar>& t, int self) {
    if (denom <= 0) return;
    const Scalar up = t.grad(self)(0, 0);
    auto& gp = t.grad_accumulator(ip);
    const auto& p = t.value(ip);
    for (Index r = 0; r < p.rows(); ++r) {
      const Scalar w = row_weight[static_cast<std::size_t>(r)];
      if (w == 0) continue;
      gp.row(r) += (Scalar(2) * w * up / denom) * (p.row(r) - target.row(r));
    }
  });
}

#define VVLA_INSTANTIATE_AUTODIFF(S)                                                                         \
  template class Tape<S>;                                                                                    \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                                     \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                                      \
  template Var<S> operator+(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> operator-(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> operator*(const Var<S>&, S);                                                              \
  template Var<S> cwise_product(const Var<S>&, const Var<S>&);                                              \
  template Var<S> sum(const Var<S>&);                                                                       \
  template Var<S> gelu(const Var<S>&);                                                                      \
  template Var<S> silu(const Var<S>&);                                                                      \
  template Var<S> layer_norm(const Var<S>&, S);                                                             \
  template Var<S> gather_rows(const Var<S>&, const std::vector<int>&);                                      \
  template Var<S> assemble_rows(const std::vector<Var<S>>&, const std::vector<std::pair<int, int>>&);       \
  template Var<S> add_indexed_rows(const Var<S>&, const Var<S>&, const std::vector<int>&);                  \
  template Var<S> modulate(const Var<S>&, const Var<S>&, Index, Index, const RowMap&);                      \
  template Var<S> gated_residual(const Var<S>&, const Var<S>&, const Var<S>&, Index, const RowMap&);        \
  template Var<S> attention(const Var<S>&, int, Index, const AttentionMask&);                               \
  template Var<S> dropout(const Var<S>&, double, std::uint64_t);                                            \
  template Var<S> masked_mse(const Var<S>&, const RowMatrix<S>&, const std::vector<S>&);

VVLA_INSTANTIATE_AUTODIFF(float)
VVLA_INSTANTIATE_AUTODIFF(double)

}  // namespace vvla
