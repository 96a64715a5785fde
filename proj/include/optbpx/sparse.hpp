#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace optbpx {

/// Row-compressed sparse matrix. Immutable once built; safe to share read-only.
class SparseOperator {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseOperator() = default;

  /// Sums duplicate entries and drops entries that sum to exactly zero.
  static SparseOperator from_triplets(std::size_t n, std::vector<Triplet> triplets,
                                      bool symmetric);

  std::size_t size() const { return n_; }
  bool symmetric() const { return symmetric_; }
  std::size_t nonzeros() const { return values_.size(); }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_index() const { return col_; }
  std::span<const double> values() const { return values_; }

  /// Entry (i, j); zero when not stored.
  double at(std::size_t i, std::size_t j) const;

  void apply(std::span<const double> x, std::span<double> y) const;
  void apply_transpose(std::span<const double> x, std::span<double> y) const;

  /// Row-major dense copy, n*n entries.
  std::vector<double> to_dense() const;

  /// max |A_ij - A_ji| over stored entries.
  double asymmetry() const;

  /// D^{-1/2} A D^{-1/2} with D = diag(A).
  SparseOperator jacobi_scaled() const;

  SparseOperator scaled(double factor) const;

 private:
  std::size_t n_ = 0;
  bool symmetric_ = true;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_;
  std::vector<double> values_;
};

/// A square linear map given only through its action.
struct LinearMap {
  std::size_t size = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;

  std::vector<double> operator()(std::span<const double> x) const {
    std::vector<double> y(size);
    apply(x, y);
    return y;
  }
};

LinearMap as_map(const SparseOperator& a);
LinearMap identity_map(std::size_t n);
LinearMap scaled_identity_map(std::size_t n, double c);

/// Row-major dense assembly of a map by applying it to unit vectors.
std::vector<double> assemble_dense(const LinearMap& op);

}  // namespace optbpx
