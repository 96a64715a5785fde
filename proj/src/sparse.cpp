#include "optbpx/sparse.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "optbpx/error.hpp"

namespace optbpx {

SparseOperator SparseOperator::from_triplets(std::size_t n, std::vector<Triplet> triplets,
                                             bool symmetric) {
  for (const auto& t : triplets) {
    if (t.row >= n || t.col >= n) throw Error("sparse: triplet index out of range");
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  SparseOperator op;
  op.n_ = n;
  op.symmetric_ = symmetric;
  op.row_ptr_.assign(n + 1, 0);
  std::size_t k = 0;
  while (k < triplets.size()) {
    const std::size_t r = triplets[k].row;
    const std::size_t c = triplets[k].col;
    double sum = 0.0;
    while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) {
      sum += triplets[k].value;
      ++k;
    }
    if (sum != 0.0) {
      op.col_.push_back(c);
      op.values_.push_back(sum);
      ++op.row_ptr_[r + 1];
    }
  }
  for (std::size_t i = 0; i < n; ++i) op.row_ptr_[i + 1] += op.row_ptr_[i];
  return op;
}

double SparseOperator::at(std::size_t i, std::size_t j) const {
  const auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  const auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_.begin())];
}

void SparseOperator::apply(std::span<const double> x, std::span<double> y) const {
  assert(x.size() == n_ && y.size() == n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += values_[p] * x[col_[p]];
    y[i] = acc;
  }
}

void SparseOperator::apply_transpose(std::span<const double> x, std::span<double> y) const {
  assert(x.size() == n_ && y.size() == n_);
  if (symmetric_) {
    apply(x, y);
    return;
  }
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) y[col_[p]] += values_[p] * x[i];
  }
}

std::vector<double> SparseOperator::to_dense() const {
  std::vector<double> d(n_ * n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d[i * n_ + col_[p]] = values_[p];
  }
  return d;
}

double SparseOperator::asymmetry() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
      worst = std::max(worst, std::abs(values_[p] - at(col_[p], i)));
    }
  }
  return worst;
}

SparseOperator SparseOperator::jacobi_scaled() const {
  std::vector<double> s(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const double d = at(i, i);
    if (!(d > 0.0)) throw NonpositiveDiagonal("jacobi scaling: nonpositive diagonal entry");
    s[i] = 1.0 / std::sqrt(d);
  }
  SparseOperator out = *this;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) out.values_[p] *= s[i] * s[col_[p]];
  }
  return out;
}

SparseOperator SparseOperator::scaled(double factor) const {
  SparseOperator out = *this;
  for (auto& v : out.values_) v *= factor;
  return out;
}

LinearMap as_map(const SparseOperator& a) {
  return {a.size(), [&a](std::span<const double> x, std::span<double> y) { a.apply(x, y); }};
}

LinearMap identity_map(std::size_t n) { return scaled_identity_map(n, 1.0); }

LinearMap scaled_identity_map(std::size_t n, double c) {
  return {n, [c](std::span<const double> x, std::span<double> y) {
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i];
          }};
}

std::vector<double> assemble_dense(const LinearMap& op) {
  const std::size_t n = op.size;
  std::vector<double> dense(n * n);
  std::vector<double> e(n, 0.0), col(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) dense[i * n + j] = col[i];
  }
  return dense;
}

}  // namespace optbpx
