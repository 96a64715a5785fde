#include "optbpx/bpx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "optbpx/error.hpp"

namespace optbpx::bpx {

// ---------------------------------------------------------------- parameters

void BpxParams::check_shape() const {
  if (levels < 2) throw UnsupportedParams("BpxParams: levels must be >= 2");
  if (dim != 1 && dim != 2) throw UnsupportedParams("BpxParams: dim must be 1 or 2");
  const auto L = static_cast<std::size_t>(levels);
  if (alpha.size() != L || eta.size() != L || xi.size() != L) {
    throw UnsupportedParams("BpxParams: alpha/eta/xi must have one entry per level");
  }
  for (int l = 1; l <= levels; ++l) {
    const auto i = static_cast<std::size_t>(l - 1);
    if (eta[i].size() != block(l) || xi[i].size() != block(l)) {
      throw UnsupportedParams("BpxParams: eta/xi of level " + std::to_string(l) + " must have " +
                              std::to_string(block(l)) + " entries");
    }
  }
}

bool BpxParams::pins_hold() const {
  const auto top = static_cast<std::size_t>(levels - 1);
  if (alpha[top] != 1.0 || eta[top][0] != 1.0) return false;
  return std::all_of(xi.begin(), xi.end(), [](const auto& x) { return x.back() == 0.0; });
}

BpxParams BpxParams::zeros(int levels, int dim) {
  BpxParams p;
  p.levels = levels;
  p.dim = dim;
  p.alpha.assign(static_cast<std::size_t>(levels), 0.0);
  for (int l = 1; l <= levels; ++l) {
    p.eta.emplace_back(p.block(l), 0.0);
    p.xi.emplace_back(p.block(l), 0.0);
  }
  return p;
}

BpxParams classical_params(int levels, int dim) {
  if (levels < 2) throw UnsupportedParams("classical_params: levels must be >= 2");
  if (dim != 1 && dim != 2) throw UnsupportedParams("classical_params: dim must be 1 or 2");
  auto p = BpxParams::zeros(levels, dim);
  for (int l = 1; l <= levels; ++l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const std::size_t m = p.block(l);
    for (std::size_t i = 0; i < m; ++i) {
      const double ramp = static_cast<double>(i + 1) / static_cast<double>(m);
      p.eta[li][i] = ramp;
      p.xi[li][i] = 1.0 - ramp;
    }
    // 2D: alpha_k^2 = h_L / h_k.
    p.alpha[li] = dim == 1 ? 1.0 : std::sqrt(std::ldexp(1.0, l - levels));
  }
  return p;
}

std::size_t trainable_count(const BpxParams& shape, ParamSelection sel) {
  std::size_t count = static_cast<std::size_t>(shape.levels - 1);
  if (sel == ParamSelection::ScalesOnly) return count;
  for (int l = 1; l < shape.levels; ++l) count += 2 * shape.block(l) - 1;
  return count;
}

std::vector<double> flatten(const BpxParams& p, ParamSelection sel) {
  std::vector<double> flat;
  flat.reserve(trainable_count(p, sel));
  for (int k = 1; k < p.levels; ++k) flat.push_back(p.alpha[static_cast<std::size_t>(k - 1)]);
  if (sel == ParamSelection::Full) {
    for (int l = 1; l < p.levels; ++l) {
      const auto& e = p.eta[static_cast<std::size_t>(l - 1)];
      const auto& x = p.xi[static_cast<std::size_t>(l - 1)];
      flat.insert(flat.end(), e.begin(), e.end());
      flat.insert(flat.end(), x.begin(), x.end() - 1);
    }
  }
  return flat;
}

void unflatten(std::span<const double> flat, BpxParams& p, ParamSelection sel) {
  if (flat.size() != trainable_count(p, sel)) {
    throw UnsupportedParams("unflatten: size does not match the trainable parameter count");
  }
  std::size_t pos = 0;
  for (int k = 1; k < p.levels; ++k) p.alpha[static_cast<std::size_t>(k - 1)] = flat[pos++];
  if (sel == ParamSelection::Full) {
    for (int l = 1; l < p.levels; ++l) {
      auto& e = p.eta[static_cast<std::size_t>(l - 1)];
      auto& x = p.xi[static_cast<std::size_t>(l - 1)];
      for (auto& v : e) v = flat[pos++];
      for (std::size_t i = 0; i + 1 < x.size(); ++i) x[i] = flat[pos++];
    }
  }
}

std::string_view to_string(BoundaryCondition bc) {
  switch (bc) {
    case BoundaryCondition::DD: return "DD";
    case BoundaryCondition::DN: return "DN";
    case BoundaryCondition::ND: return "ND";
    case BoundaryCondition::NN: return "NN";
  }
  return "?";
}

BoundaryCondition bc_from_string(std::string_view s) {
  if (s == "DD") return BoundaryCondition::DD;
  if (s == "DN") return BoundaryCondition::DN;
  if (s == "ND") return BoundaryCondition::ND;
  if (s == "NN") return BoundaryCondition::NN;
  throw UnsupportedBC("unknown boundary condition '" + std::string(s) + "'");
}

// ------------------------------------------------------------------- factors

ProlongationFactor::ProlongationFactor(int level, int levels, std::span<const double> eta,
                                       std::span<const double> xi, BoundaryCondition bc,
                                       NeumannCoupling nn)
    : level_(level), block_(std::size_t{1} << (levels - level)) {
  if (level < 1 || level > levels) throw UnsupportedParams("factor level out of range");
  const std::size_t m = block_;
  if (eta.size() != m || xi.size() != m) {
    throw UnsupportedParams("factor: eta/xi must have 2^(L-l) entries");
  }
  const std::size_t fine_full = std::size_t{1} << levels;
  const std::size_t coarse_full = std::size_t{1} << level;

  // Dirichlet-Neumann layout: column j carries eta in block j and xi in block j+1.
  auto for_base = [&](auto&& emit) {
    for (std::size_t j = 0; j < coarse_full; ++j) {
      for (std::size_t i = 0; i < m; ++i) emit(j * m + i, j, static_cast<int>(i), eta[i]);
      if (j + 1 < coarse_full) {
        for (std::size_t i = 0; i < m; ++i) {
          emit((j + 1) * m + i, j, static_cast<int>(m + i), xi[i]);
        }
      }
    }
  };
  auto push = [&](std::size_t r, std::size_t c, int slot, double v) {
    entries_.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), slot, v});
  };

  switch (bc) {
    case BoundaryCondition::DD:
      fine_ = fine_full - 1;
      coarse_ = coarse_full - 1;
      for_base([&](std::size_t r, std::size_t c, int slot, double v) {
        if (r < fine_ && c < coarse_) push(r, c, slot, v);
      });
      break;
    case BoundaryCondition::DN:
      fine_ = fine_full;
      coarse_ = coarse_full;
      for_base(push);
      break;
    case BoundaryCondition::ND:
      fine_ = fine_full;
      coarse_ = coarse_full;
      for_base([&](std::size_t r, std::size_t c, int slot, double v) {
        push(fine_ - 1 - r, coarse_ - 1 - c, slot, v);
      });
      break;
    case BoundaryCondition::NN:
      if (nn == NeumannCoupling::Unresolved) {
        throw UnsupportedBC("Neumann-Neumann factor needs a resolved boundary coupling");
      }
      fine_ = fine_full + 1;
      coarse_ = coarse_full + 1;
      push(0, 0, kConstant, 1.0);
      for (std::size_t i = 0; i < m; ++i) push(1 + i, 0, static_cast<int>(m + i), xi[i]);
      for_base([&](std::size_t r, std::size_t c, int slot, double v) { push(r + 1, c + 1, slot, v); });
      break;
  }
}

void ProlongationFactor::prolong(const double* coarse, std::size_t cs, double* fine,
                                 std::size_t fs) const {
  for (std::size_t r = 0; r < fine_; ++r) fine[r * fs] = 0.0;
  for (const auto& e : entries_) fine[e.row * fs] += e.value * coarse[e.col * cs];
}

void ProlongationFactor::restrict_(const double* fine, std::size_t fs, double* coarse,
                                   std::size_t cs) const {
  for (std::size_t j = 0; j < coarse_; ++j) coarse[j * cs] = 0.0;
  for (const auto& e : entries_) coarse[e.col * cs] += e.value * fine[e.row * fs];
}

std::vector<double> ProlongationFactor::dense() const {
  std::vector<double> d(fine_ * coarse_, 0.0);
  for (const auto& e : entries_) d[e.row * coarse_ + e.col] += e.value;
  return d;
}

ProlongationFactor build_factor(int level, const BpxParams& params, BoundaryCondition bc,
                                NeumannCoupling nn) {
  params.check_shape();
  if (level < 1 || level > params.levels) throw UnsupportedParams("build_factor: level out of range");
  const auto i = static_cast<std::size_t>(level - 1);
  return ProlongationFactor(level, params.levels, params.eta[i], params.xi[i], bc, nn);
}

std::size_t max_column_support(const ProlongationFactor& f) {
  std::vector<std::size_t> count(f.coarse_size(), 0);
  const auto d = f.dense();
  for (std::size_t r = 0; r < f.fine_size(); ++r) {
    for (std::size_t c = 0; c < f.coarse_size(); ++c) {
      if (d[r * f.coarse_size() + c] != 0.0) ++count[c];
    }
  }
  return count.empty() ? 0 : *std::max_element(count.begin(), count.end());
}

// ------------------------------------------------------------------ variants

std::string to_string(const Variant& v) {
  switch (v.kind) {
    case Variant::Kind::Plain: return "plain";
    case Variant::Kind::Rescaled: return "rescaled";
    case Variant::Kind::Semicoarsen:
      return "semicoarsen(s=" + std::to_string(v.s) + "," +
             (v.strong_axis == Axis::X ? "x" : "y") + "," +
             (v.other == OtherAxis::Denser ? "denser" : "clamped") + ")";
  }
  return "?";
}

TermLevels term_levels(const Variant& v, int k, int levels) {
  if (v.kind != Variant::Kind::Semicoarsen || k == levels) return {k, k};
  const int other = v.other == OtherAxis::Denser ? std::min(k + v.s, levels) : std::max(k - v.s, 1);
  return v.strong_axis == Axis::Y ? TermLevels{other, k} : TermLevels{k, other};
}

std::vector<std::vector<double>> rescale_diagonals(const SparseOperator& a, int levels, int dim,
                                                   BoundaryCondition bc) {
  if (!a.symmetric()) throw NotSymmetric("rescale_diagonals: operator must be symmetric");
  const auto cp = classical_params(levels, dim);
  const auto rp = a.row_ptr();
  const auto ci = a.col_index();
  const auto av = a.values();
  std::vector<std::vector<double>> out;
  for (int k = 1; k <= levels; ++k) {
    const auto f = build_factor(k, cp, bc);
    const std::size_t n1 = f.fine_size();
    const std::size_t nc = f.coarse_size();
    if ((dim == 1 ? n1 : n1 * n1) != a.size()) {
      throw UnsupportedParams("rescale_diagonals: operator size does not match the grid");
    }
    std::vector<std::vector<std::pair<std::size_t, double>>> cols(nc);
    for (const auto& e : f.entries()) {
      if (e.value != 0.0) cols[e.col].emplace_back(e.row, e.value);
    }
    std::vector<double> p(a.size(), 0.0);
    std::vector<std::pair<std::size_t, double>> support;
    std::vector<double> diag;
    const std::size_t ncols = dim == 1 ? nc : nc * nc;
    diag.reserve(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
      support.clear();
      if (dim == 1) {
        support = cols[c];
      } else {
        const std::size_t cx = c % nc, cy = c / nc;
        for (const auto& [ry, vy] : cols[cy]) {
          for (const auto& [rx, vx] : cols[cx]) support.emplace_back(ry * n1 + rx, vx * vy);
        }
      }
      for (const auto& [r, v] : support) p[r] = v;
      double q = 0.0;
      for (const auto& [r, v] : support) {
        double row = 0.0;
        for (std::size_t t = rp[r]; t < rp[r + 1]; ++t) row += av[t] * p[ci[t]];
        q += v * row;
      }
      for (const auto& [r, v] : support) p[r] = 0.0;
      if (!(q > 0.0)) {
        throw NonpositiveDiagonal("rescale_diagonals: Galerkin diagonal entry <= 0 at level " +
                                  std::to_string(k));
      }
      diag.push_back(1.0 / std::sqrt(q));
    }
    out.push_back(std::move(diag));
  }
  return out;
}

// ------------------------------------------------------------ preconditioner

Preconditioner::Preconditioner(BpxParams params, Variant variant, BoundaryCondition bc,
                               std::vector<std::vector<double>> rescale, NeumannCoupling nn)
    : params_(std::move(params)), variant_(variant), bc_(bc), rescale_(std::move(rescale)) {
  params_.check_shape();
  const int L = params_.levels;
  if (variant_.kind == Variant::Kind::Semicoarsen) {
    if (params_.dim != 2) throw UnsupportedParams("semicoarsening requires a 2D preconditioner");
    if (variant_.s < 0) throw UnsupportedParams("semicoarsening depth s must be >= 0");
  }
  if (variant_.kind == Variant::Kind::Rescaled) {
    if (rescale_.size() != static_cast<std::size_t>(L)) {
      throw UnsupportedParams("rescaled variant needs one diagonal per level");
    }
  } else if (!rescale_.empty()) {
    throw UnsupportedParams("diagonals given for a variant that is not rescaled");
  }
  for (int l = 1; l <= L; ++l) factors_.push_back(build_factor(l, params_, bc_, nn));
  fine1d_ = factors_.back().fine_size();
  size_ = params_.dim == 1 ? fine1d_ : fine1d_ * fine1d_;
  for (int k = 1; k <= L; ++k) {
    const auto lv = term_levels(variant_, k, L);
    const std::vector<double>* diag = nullptr;
    if (variant_.kind == Variant::Kind::Rescaled) {
      diag = &rescale_[static_cast<std::size_t>(k - 1)];
      const Term probe{k, lv.x, lv.y, nullptr};
      if (diag->size() != coarse_count(probe)) {
        throw UnsupportedParams("rescale diagonal of level " + std::to_string(k) +
                                " has the wrong length");
      }
    }
    terms_.push_back({k, lv.x, lv.y, diag});
  }
}

std::size_t Preconditioner::coarse_count(const Term& t) const {
  const std::size_t cx = factor(t.x_level).coarse_size();
  return params_.dim == 1 ? cx : cx * factor(t.y_level).coarse_size();
}

void Preconditioner::restrict_term(const Term& t, std::span<const double> v,
                                   std::span<double> coarse, std::vector<double>& scratch) const {
  const auto& px = factor(t.x_level);
  if (params_.dim == 1) {
    px.restrict_(v, coarse);
    return;
  }
  const auto& py = factor(t.y_level);
  const std::size_t n1 = fine1d_, ncx = px.coarse_size();
  scratch.resize(n1 * ncx);
  for (std::size_t iy = 0; iy < n1; ++iy) px.restrict_(&v[iy * n1], 1, &scratch[iy * ncx], 1);
  for (std::size_t jx = 0; jx < ncx; ++jx) py.restrict_(&scratch[jx], ncx, &coarse[jx], ncx);
}

void Preconditioner::prolong_term(const Term& t, std::span<const double> coarse,
                                  std::span<double> out, double weight,
                                  std::vector<double>& scratch) const {
  const auto& px = factor(t.x_level);
  const std::size_t n1 = fine1d_, ncx = px.coarse_size();
  if (params_.dim == 1) {
    scratch.resize(n1);
    px.prolong(coarse, scratch);
    for (std::size_t i = 0; i < n1; ++i) out[i] += weight * scratch[i];
    return;
  }
  const auto& py = factor(t.y_level);
  scratch.resize(n1 * ncx + n1);
  double* mid = scratch.data();
  double* row = scratch.data() + n1 * ncx;
  for (std::size_t jx = 0; jx < ncx; ++jx) py.prolong(&coarse[jx], ncx, &mid[jx], ncx);
  for (std::size_t iy = 0; iy < n1; ++iy) {
    px.prolong(&mid[iy * ncx], 1, row, 1);
    double* o = &out[iy * n1];
    for (std::size_t ix = 0; ix < n1; ++ix) o[ix] += weight * row[ix];
  }
}

void Preconditioner::apply(std::span<const double> v, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> coarse, scratch;
  for (const auto& t : terms_) {
    coarse.resize(coarse_count(t));
    restrict_term(t, v, coarse, scratch);
    if (t.diag != nullptr) {
      for (std::size_t j = 0; j < coarse.size(); ++j) coarse[j] *= (*t.diag)[j];
    }
    const double a = params_.alpha[static_cast<std::size_t>(t.k - 1)];
    prolong_term(t, coarse, out, a * a, scratch);
  }
}

std::vector<double> Preconditioner::apply(std::span<const double> v) const {
  std::vector<double> out(size_);
  apply(v, out);
  return out;
}

namespace {

void add_slot(BpxParams& grad, int level, std::size_t block, int slot, double g) {
  if (slot == ProlongationFactor::kConstant) return;
  const auto li = static_cast<std::size_t>(level - 1);
  const auto s = static_cast<std::size_t>(slot);
  if (s < block) {
    grad.eta[li][s] += g;
  } else {
    grad.xi[li][s - block] += g;
  }
}

}  // namespace

void Preconditioner::accumulate_bilinear_grad(std::span<const double> u,
                                              std::span<const double> w, double scale,
                                              BpxParams& grad) const {
  const int L = params_.levels;
  std::vector<double> cu, cw, a, b, scratch;
  std::vector<double> ya, yb;
  for (const auto& t : terms_) {
    const std::size_t nc = coarse_count(t);
    cu.resize(nc);
    cw.resize(nc);
    restrict_term(t, u, cu, scratch);
    restrict_term(t, w, cw, scratch);
    a = cw;
    b = cu;
    if (t.diag != nullptr) {
      for (std::size_t j = 0; j < nc; ++j) {
        a[j] *= (*t.diag)[j];
        b[j] *= (*t.diag)[j];
      }
    }
    const auto ki = static_cast<std::size_t>(t.k - 1);
    const double alpha = params_.alpha[ki];
    double dot = 0.0;
    for (std::size_t j = 0; j < nc; ++j) dot += cu[j] * a[j];
    grad.alpha[ki] += scale * 2.0 * alpha * dot;

    const double s = scale * alpha * alpha;
    const auto& px = factor(t.x_level);
    if (params_.dim == 1) {
      if (t.x_level == L) continue;
      for (const auto& e : px.entries()) {
        add_slot(grad, t.x_level, px.block(), e.slot, s * (u[e.row] * a[e.col] + w[e.row] * b[e.col]));
      }
      continue;
    }
    const auto& py = factor(t.y_level);
    const std::size_t n1 = fine1d_, ncx = px.coarse_size(), ncy = py.coarse_size();
    if (t.x_level < L) {
      // G_x(ix, jx) = sum_iy U(iy, ix) (P_y A)(iy, jx) + same for (W, B).
      ya.resize(n1 * ncx);
      yb.resize(n1 * ncx);
      for (std::size_t jx = 0; jx < ncx; ++jx) {
        py.prolong(&a[jx], ncx, &ya[jx], ncx);
        py.prolong(&b[jx], ncx, &yb[jx], ncx);
      }
      for (const auto& e : px.entries()) {
        if (e.slot == ProlongationFactor::kConstant) continue;
        double g = 0.0;
        for (std::size_t iy = 0; iy < n1; ++iy) {
          g += u[iy * n1 + e.row] * ya[iy * ncx + e.col] + w[iy * n1 + e.row] * yb[iy * ncx + e.col];
        }
        add_slot(grad, t.x_level, px.block(), e.slot, s * g);
      }
    }
    if (t.y_level < L) {
      // G_y(iy, jy) = sum_ix U(iy, ix) (A P_x^T)(jy, ix) + same for (W, B).
      ya.resize(ncy * n1);
      yb.resize(ncy * n1);
      for (std::size_t jy = 0; jy < ncy; ++jy) {
        px.prolong(&a[jy * ncx], 1, &ya[jy * n1], 1);
        px.prolong(&b[jy * ncx], 1, &yb[jy * n1], 1);
      }
      for (const auto& e : py.entries()) {
        if (e.slot == ProlongationFactor::kConstant) continue;
        const double* ur = &u[e.row * n1];
        const double* wr = &w[e.row * n1];
        const double* ar = &ya[e.col * n1];
        const double* br = &yb[e.col * n1];
        double g = 0.0;
        for (std::size_t ix = 0; ix < n1; ++ix) g += ur[ix] * ar[ix] + wr[ix] * br[ix];
        add_slot(grad, t.y_level, py.block(), e.slot, s * g);
      }
    }
  }
}

std::vector<double> Preconditioner::dense() const { return assemble_dense(as_map()); }

LinearMap Preconditioner::as_map() const {
  return {size_, [this](std::span<const double> x, std::span<double> y) { apply(x, y); }};
}

LinearMap symmetric_map(const Preconditioner& b, const SparseOperator& a) {
  if (a.size() != b.size()) throw UnsupportedParams("preconditioner and operator sizes differ");
  return {a.size(), [&b, &a](std::span<const double> x, std::span<double> y) {
            std::vector<double> t1(x.size()), t2(x.size());
            b.apply(x, t1);
            a.apply(t1, t2);
            b.apply(t2, y);
          }};
}

std::vector<double> apply_symmetric(const Preconditioner& b, const SparseOperator& a,
                                    std::span<const double> v) {
  return symmetric_map(b, a)(v);
}

void export_basis(const BpxParams& params, int level, const std::filesystem::path& path) {
  params.check_shape();
  if (level < 1 || level >= params.levels) {
    throw UnsupportedParams("export_basis: level must satisfy 1 <= l < L");
  }
  const auto f = build_factor(level, params, BoundaryCondition::DD);
  const std::size_t mid = (f.coarse_size() - 1) / 2;
  std::vector<double> column(f.fine_size(), 0.0);
  for (const auto& e : f.entries()) {
    if (e.col == mid) column[e.row] += e.value;
  }
  std::ofstream out(path);
  if (!out) throw Error("export_basis: cannot open " + path.string());
  const double h = std::ldexp(1.0, -params.levels);
  char buf[64];
  out << "x,value\n";
  out << "0,0\n";
  for (std::size_t r = 0; r < column.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", static_cast<double>(r + 1) * h, column[r]);
    out << buf;
  }
  out << "1,0\n";
  if (!out) throw Error("export_basis: write failed for " + path.string());
}

}  // namespace optbpx::bpx
