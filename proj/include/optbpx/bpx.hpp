#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "optbpx/sparse.hpp"

namespace optbpx::bpx {

/// Free parameters of the modified BPX preconditioner
///   B = sum_k alpha_k^2 P_k P_k^T,  P_l = I_l (x) eta_{L-l} + S_l (x) xi_{L-l}.
/// Level l is 1-based; alpha[k-1], eta[l-1], xi[l-1]. eta/xi of level l hold 2^{L-l}
/// entries. Pinned: alpha_L = 1, eta of level L = (1), last entry of every xi = 0.
struct BpxParams {
  int levels = 0;
  int dim = 1;
  std::vector<double> alpha;
  std::vector<std::vector<double>> eta;
  std::vector<std::vector<double>> xi;

  std::size_t block(int level) const { return std::size_t{1} << (levels - level); }

  /// Throws UnsupportedParams on inconsistent array sizes.
  void check_shape() const;
  /// True when every pinned entry holds its pinned value.
  bool pins_hold() const;

  static BpxParams zeros(int levels, int dim);
};

BpxParams classical_params(int levels, int dim);

enum class ParamSelection { Full, ScalesOnly };

std::size_t trainable_count(const BpxParams& shape, ParamSelection sel);
/// Trainable entries in a fixed order: alpha_1..alpha_{L-1}, then per level
/// l = 1..L-1 the eta array followed by xi without its last entry.
std::vector<double> flatten(const BpxParams& p, ParamSelection sel);
void unflatten(std::span<const double> flat, BpxParams& p, ParamSelection sel);

enum class BoundaryCondition { DD, DN, ND, NN };
std::string_view to_string(BoundaryCondition bc);
BoundaryCondition bc_from_string(std::string_view s);

/// How the x = 0 tent couples into the first fine block for Neumann-Neumann.
/// Only FirstUnitVector is implemented; Unresolved makes NN factors throw.
enum class NeumannCoupling { Unresolved, FirstUnitVector };

/// Matrix-free 1D prolongation P_l^L (coarse level l -> fine level L).
class ProlongationFactor {
 public:
  /// Trainable slot an entry reads from: eta[i] (0 <= i < m), xi[i - m] (m <= i < 2m),
  /// or kConstant for a structural 1.
  static constexpr int kConstant = -1;

  struct Entry {
    std::uint32_t row;
    std::uint32_t col;
    int slot;
    double value;
  };

  ProlongationFactor(int level, int levels, std::span<const double> eta,
                     std::span<const double> xi, BoundaryCondition bc,
                     NeumannCoupling nn = NeumannCoupling::Unresolved);

  int level() const { return level_; }
  std::size_t block() const { return block_; }
  std::size_t fine_size() const { return fine_; }
  std::size_t coarse_size() const { return coarse_; }
  std::span<const Entry> entries() const { return entries_; }

  /// fine[r*fs] = sum_j P(r, j) coarse[j*cs]
  void prolong(const double* coarse, std::size_t cs, double* fine, std::size_t fs) const;
  /// coarse[j*cs] = sum_r P(r, j) fine[r*fs]
  void restrict_(const double* fine, std::size_t fs, double* coarse, std::size_t cs) const;

  void prolong(std::span<const double> coarse, std::span<double> fine) const {
    prolong(coarse.data(), 1, fine.data(), 1);
  }
  void restrict_(std::span<const double> fine, std::span<double> coarse) const {
    restrict_(fine.data(), 1, coarse.data(), 1);
  }

  /// Row-major fine_size x coarse_size.
  std::vector<double> dense() const;

 private:
  int level_;
  std::size_t block_;
  std::size_t fine_ = 0;
  std::size_t coarse_ = 0;
  std::vector<Entry> entries_;
};

ProlongationFactor build_factor(int level, const BpxParams& params, BoundaryCondition bc,
                                NeumannCoupling nn = NeumannCoupling::Unresolved);

enum class Axis { X, Y };

/// Level of the weak axis in semicoarsened term k:
///   Denser  -> min(k + s, L)  (weak axis s levels finer than the strong one)
///   Clamped -> max(k - s, 1)  (weak axis s levels coarser, clamped at level 1)
enum class OtherAxis { Denser, Clamped };

struct Variant {
  enum class Kind { Plain, Semicoarsen, Rescaled };
  Kind kind = Kind::Plain;
  int s = 0;
  Axis strong_axis = Axis::Y;
  OtherAxis other = OtherAxis::Denser;

  static Variant plain() { return {}; }
  static Variant semicoarsen(int s, Axis strong, OtherAxis other = OtherAxis::Denser) {
    return {Kind::Semicoarsen, s, strong, other};
  }
  static Variant rescaled() { return {Kind::Rescaled, 0, Axis::Y, OtherAxis::Denser}; }
};

std::string to_string(const Variant& v);

/// Coarse grid pair visited by term k. The finest term is always (L, L); for
/// semicoarsening the strong axis keeps level k and the other axis follows OtherAxis.
struct TermLevels {
  int x;
  int y;
};
TermLevels term_levels(const Variant& v, int k, int levels);

/// Per level k, diag(P_k^T A P_k)^{-1/2} with the classical (untrained) factors.
/// Throws NotSymmetric for a nonsymmetric A, NonpositiveDiagonal for an entry <= 0.
std::vector<std::vector<double>> rescale_diagonals(const SparseOperator& a, int levels, int dim,
                                                   BoundaryCondition bc = BoundaryCondition::DD);

/// Matrix-free modified BPX preconditioner. Immutable; apply is reentrant.
class Preconditioner {
 public:
  Preconditioner(BpxParams params, Variant variant = Variant::plain(),
                 BoundaryCondition bc = BoundaryCondition::DD,
                 std::vector<std::vector<double>> rescale = {},
                 NeumannCoupling nn = NeumannCoupling::Unresolved);

  std::size_t size() const { return size_; }
  const BpxParams& params() const { return params_; }
  const Variant& variant() const { return variant_; }
  BoundaryCondition bc() const { return bc_; }
  const std::vector<std::vector<double>>& rescale() const { return rescale_; }

  void apply(std::span<const double> v, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> v) const;

  /// grad += scale * d/d(params) [u^T B w]. grad must have the shape of params().
  void accumulate_bilinear_grad(std::span<const double> u, std::span<const double> w,
                                double scale, BpxParams& grad) const;

  /// Row-major dense B.
  std::vector<double> dense() const;
  LinearMap as_map() const;

 private:
  struct Term {
    int k;
    int x_level;
    int y_level;
    const std::vector<double>* diag;
  };

  const ProlongationFactor& factor(int level) const {
    return factors_[static_cast<std::size_t>(level - 1)];
  }
  void restrict_term(const Term& t, std::span<const double> v, std::span<double> coarse,
                     std::vector<double>& scratch) const;
  void prolong_term(const Term& t, std::span<const double> coarse, std::span<double> out,
                    double weight, std::vector<double>& scratch) const;
  std::size_t coarse_count(const Term& t) const;

  BpxParams params_;
  Variant variant_;
  BoundaryCondition bc_;
  std::vector<std::vector<double>> rescale_;
  std::vector<ProlongationFactor> factors_;
  std::vector<Term> terms_;
  std::size_t fine1d_ = 0;
  std::size_t size_ = 0;
};

/// x -> B (A (B x)).
LinearMap symmetric_map(const Preconditioner& b, const SparseOperator& a);
std::vector<double> apply_symmetric(const Preconditioner& b, const SparseOperator& a,
                                    std::span<const double> v);

/// Writes the middle column of the level-l factor as "x,value" rows, including the
/// zero boundary samples at x = 0 and x = 1. Requires 1 <= level < L.
void export_basis(const BpxParams& params, int level, const std::filesystem::path& path);

/// Largest number of nonzero values in any column of the factor.
std::size_t max_column_support(const ProlongationFactor& f);

}  // namespace optbpx::bpx
