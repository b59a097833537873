#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "vvla/errors.hpp"

namespace vvla {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixF = RowMatrix<float>;
using MatrixD = RowMatrix<double>;

// Dense row-major n-d array. The trailing extent is the column count of the
// matrix view; all leading extents are folded into rows.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = RowMatrix<Scalar>;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    for (Index e : shape_) {
      if (e < 0) throw DataError("tensor extent must be non-negative");
    }
    data_.setZero(product());
  }

  Tensor(std::vector<Index> shape, const Scalar* values) : Tensor(std::move(shape)) {
    std::copy(values, values + data_.size(), data_.data());
  }

  static Tensor from_matrix(const MatrixType& m) {
    Tensor t({m.rows(), m.cols()});
    t.matrix() = m;
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Index rows() const { return shape_.empty() ? 1 : size() / cols(); }
  Index cols() const { return shape_.empty() ? 1 : shape_.back(); }

  Eigen::Map<MatrixType> matrix() { return {data_.data(), rows(), cols()}; }
  Eigen::Map<const MatrixType> matrix() const { return {data_.data(), rows(), cols()}; }

  auto flat() { return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size()); }
  auto flat() const {
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.flat() = flat().template cast<Other>();
    return out;
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ &&
           std::equal(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  }

 private:
  Index product() const {
    return std::accumulate(shape_.begin(), shape_.end(), Index{1}, std::multiplies<>());
  }

  std::vector<Index> shape_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data_;
};

// Named parameters in deterministic (lexicographic) order.
template <typename Scalar>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<Scalar>>;

  void add(const std::string& name, Tensor<Scalar> value) {
    if (!entries_.emplace(name, std::move(value)).second)
      throw DataError("duplicate parameter name: " + name);
  }
  void set(const std::string& name, Tensor<Scalar> value) { entries_[name] = std::move(value); }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor<Scalar>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor<Scalar>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  Index scalar_count() const {
    Index n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<Other>());
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  Map entries_;
};

}  // namespace vvla
