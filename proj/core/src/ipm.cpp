#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include "cones.hpp"
#include "flexmarket/error.hpp"
#include "flexmarket/solver.hpp"
#include "ldl.hpp"

namespace flexmarket {

namespace {

using detail::ConeLayout;
using detail::NtScaling;
using detail::Vec;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

constexpr double kStaticReg = 1e-8;
constexpr double kPivotEps = 1e-13;
constexpr double kDynamicReg = 1e-7;
constexpr double kStepFraction = 0.99;
// Accepted when the iterates stop improving short of the requested tolerance.
constexpr double kReducedTol = 1e-6;
constexpr int kStallWindow = 8;

double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// ---------------------------------------------------------------------------
// Standard form after presolve: min c'x s.t. Ax = b, Gx + s = h, s in K.

struct StandardForm {
  int n = 0;
  SpMat a, g;
  Vec b, c, h;
  double c0 = 0.0;
  ConeLayout cones;

  // maps back to the original program
  std::vector<int> var_map;        // standard column -> original var
  std::vector<int> eq_row;         // original equality -> A row or -1
  std::vector<int> ineq_row;       // original inequality -> G row or -1
  std::vector<int> lower_row;      // original var -> G row or -1
  std::vector<int> upper_row;
  std::vector<int> cone_offset;    // original cone -> first G row
  std::vector<char> fixed;
  std::vector<double> fixed_value;
  std::string infeasible_reason;
};

StandardForm to_standard(const ConicProgram& p, bool presolve) {
  StandardForm sf;
  const int nv = p.num_vars();
  sf.fixed.assign(nv, 0);
  sf.fixed_value.assign(nv, 0.0);
  std::vector<int> col(nv, -1);
  for (int j = 0; j < nv; ++j) {
    if (p.lower[j] > p.upper[j]) {
      sf.infeasible_reason = "variable " + p.var_names[j] + " has lower bound above upper bound";
    }
    if (presolve && std::isfinite(p.lower[j]) && p.lower[j] == p.upper[j]) {
      sf.fixed[j] = 1;
      sf.fixed_value[j] = p.lower[j];
      sf.c0 += p.cost[j] * p.lower[j];
    } else {
      col[j] = sf.n++;
      sf.var_map.push_back(j);
    }
  }
  sf.c0 += p.cost_constant;
  sf.c = Vec::Zero(sf.n);
  for (int j = 0; j < nv; ++j) {
    if (col[j] >= 0) sf.c[col[j]] = p.cost[j];
  }

  auto reduce = [&](const LinearRow& row, std::vector<std::pair<int, double>>& kept, double& shift) {
    kept.clear();
    shift = 0.0;
    for (const auto& [j, v] : row.terms) {
      if (v == 0.0) continue;
      if (col[j] >= 0) {
        kept.emplace_back(col[j], v);
      } else {
        shift += v * sf.fixed_value[j];
      }
    }
  };

  std::vector<std::pair<int, double>> kept;
  double shift = 0.0;

  // equalities
  std::vector<Triplet> at;
  std::vector<double> bv;
  sf.eq_row.assign(p.equalities.size(), -1);
  for (std::size_t r = 0; r < p.equalities.size(); ++r) {
    reduce(p.equalities[r], kept, shift);
    const double rhs = p.equalities[r].rhs - shift;
    if (kept.empty() && presolve) {
      if (std::abs(rhs) > 1e-9 * (1.0 + std::abs(p.equalities[r].rhs)))
        sf.infeasible_reason = "empty equality row with nonzero right-hand side";
      continue;
    }
    const int row = static_cast<int>(bv.size());
    for (const auto& [j, v] : kept) at.emplace_back(row, j, v);
    bv.push_back(rhs);
    sf.eq_row[r] = row;
  }
  sf.a.resize(static_cast<int>(bv.size()), sf.n);
  sf.a.setFromTriplets(at.begin(), at.end());
  sf.b = Eigen::Map<Vec>(bv.data(), static_cast<Eigen::Index>(bv.size()));

  // linear part of G
  std::vector<Triplet> gt;
  std::vector<double> hv;
  sf.ineq_row.assign(p.inequalities.size(), -1);
  for (std::size_t r = 0; r < p.inequalities.size(); ++r) {
    reduce(p.inequalities[r], kept, shift);
    const double rhs = p.inequalities[r].rhs - shift;
    if (kept.empty() && presolve) {
      if (rhs < -1e-9 * (1.0 + std::abs(p.inequalities[r].rhs)))
        sf.infeasible_reason = "empty inequality row with negative right-hand side";
      continue;
    }
    const int row = static_cast<int>(hv.size());
    for (const auto& [j, v] : kept) gt.emplace_back(row, j, v);
    hv.push_back(rhs);
    sf.ineq_row[r] = row;
  }
  sf.lower_row.assign(nv, -1);
  sf.upper_row.assign(nv, -1);
  for (int j = 0; j < nv; ++j) {
    if (col[j] < 0 || !std::isfinite(p.lower[j])) continue;
    const int row = static_cast<int>(hv.size());
    gt.emplace_back(row, col[j], -1.0);
    hv.push_back(-p.lower[j]);
    sf.lower_row[j] = row;
  }
  for (int j = 0; j < nv; ++j) {
    if (col[j] < 0 || !std::isfinite(p.upper[j])) continue;
    const int row = static_cast<int>(hv.size());
    gt.emplace_back(row, col[j], 1.0);
    hv.push_back(p.upper[j]);
    sf.upper_row[j] = row;
  }
  sf.cones.linear = static_cast<int>(hv.size());

  // second-order cones: u = F x + g,  s = u = h - G x  with G = -F
  for (const ConeBlock& cb : p.cones) {
    sf.cone_offset.push_back(static_cast<int>(hv.size()));
    sf.cones.soc_sizes.push_back(static_cast<int>(cb.rows.size()));
    for (const LinearRow& r : cb.rows) {
      reduce(r, kept, shift);
      const int row = static_cast<int>(hv.size());
      for (const auto& [j, v] : kept) gt.emplace_back(row, j, -v);
      hv.push_back(r.rhs + shift);
    }
  }
  sf.cones.finalize();
  sf.g.resize(static_cast<int>(hv.size()), sf.n);
  sf.g.setFromTriplets(gt.begin(), gt.end());
  sf.h = Eigen::Map<Vec>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  return sf;
}

// ---------------------------------------------------------------------------
// Ruiz equilibration: A~ = Ea A D, G~ = Eg G D, c~ = k D c.

struct Scaling {
  Vec d, ea, eg;
  double cost = 1.0;
};

Scaling equilibrate(StandardForm& sf, bool enabled) {
  Scaling sc;
  const int n = sf.n;
  const int p = static_cast<int>(sf.a.rows());
  const int m = static_cast<int>(sf.g.rows());
  sc.d = Vec::Ones(n);
  sc.ea = Vec::Ones(p);
  sc.eg = Vec::Ones(m);
  if (enabled) {
    auto safe = [](double v) {
      if (v < 1e-8) return 1.0;
      return std::clamp(1.0 / std::sqrt(v), 1e-4, 1e4);
    };
    for (int it = 0; it < 25; ++it) {
      Vec cn = Vec::Zero(n), ra = Vec::Zero(p), rg = Vec::Zero(m);
      for (int k = 0; k < n; ++k) {
        for (SpMat::InnerIterator i(sf.a, k); i; ++i) {
          const double v = std::abs(i.value());
          cn[k] = std::max(cn[k], v);
          ra[i.row()] = std::max(ra[i.row()], v);
        }
        for (SpMat::InnerIterator i(sf.g, k); i; ++i) {
          const double v = std::abs(i.value());
          cn[k] = std::max(cn[k], v);
          rg[i.row()] = std::max(rg[i.row()], v);
        }
      }
      for (std::size_t c = 0; c < sf.cones.soc_sizes.size(); ++c) {
        const int o = sf.cones.soc_start[c], q = sf.cones.soc_sizes[c];
        const double mx = rg.segment(o, q).maxCoeff();
        rg.segment(o, q).setConstant(mx);
      }
      double dev = 0.0;
      for (int k = 0; k < n; ++k) if (cn[k] > 1e-8) dev = std::max(dev, std::abs(1.0 - cn[k]));
      for (int r = 0; r < p; ++r) if (ra[r] > 1e-8) dev = std::max(dev, std::abs(1.0 - ra[r]));
      for (int r = 0; r < m; ++r) if (rg[r] > 1e-8) dev = std::max(dev, std::abs(1.0 - rg[r]));
      if (dev < 1e-3) break;
      Vec dc(n), dra(p), drg(m);
      for (int k = 0; k < n; ++k) dc[k] = safe(cn[k]);
      for (int r = 0; r < p; ++r) dra[r] = safe(ra[r]);
      for (int r = 0; r < m; ++r) drg[r] = safe(rg[r]);
      sf.a = dra.asDiagonal() * sf.a * dc.asDiagonal();
      sf.g = drg.asDiagonal() * sf.g * dc.asDiagonal();
      sc.d.array() *= dc.array();
      sc.ea.array() *= dra.array();
      sc.eg.array() *= drg.array();
    }
  }
  sf.b = sc.ea.asDiagonal() * sf.b;
  sf.h = sc.eg.asDiagonal() * sf.h;
  sf.c = sc.d.asDiagonal() * sf.c;
  const double cn = inf_norm(sf.c);
  sc.cost = enabled ? 1.0 / std::max(1.0, cn) : 1.0;
  sf.c *= sc.cost;
  return sc;
}

// ---------------------------------------------------------------------------
// Quasi-definite KKT system, either direct
//   [D A' G'; A -D 0; G 0 -W^2 - D]
// or scaled
//   [D A' M'; A -D 0; M 0 -I - D],  M = W^{-1} G,  unknowns (dx, dy, W dz).
// The direct form is the default; the scaled form keeps W out of the diagonal and
// survives the near-singular W^2 blocks that strictly complementary cone pairs
// produce late in some solves.

class KktSystem {
 public:
  KktSystem(const SpMat& a, const SpMat& g, const ConeLayout& k, bool scaled)
      : a_(a), g_(g), k_(k), n_(static_cast<int>(a.cols())), p_(static_cast<int>(a.rows())),
        m_(static_cast<int>(g.rows())), dim_(n_ + p_ + m_), scaled_(scaled) {
    block_of_.assign(static_cast<std::size_t>(m_), -1);
    for (std::size_t c = 0; c < k_.soc_sizes.size(); ++c)
      for (int i = 0; i < k_.soc_sizes[c]; ++i) block_of_[static_cast<std::size_t>(k_.soc_start[c] + i)] = static_cast<int>(c);
    // Column pattern of M: linear rows of G plus every row of each touched cone.
    m_rows_.resize(static_cast<std::size_t>(n_));
    for (int col = 0; col < n_; ++col) {
      auto& rows = m_rows_[static_cast<std::size_t>(col)];
      int last_block = -1;
      for (SpMat::InnerIterator it(g_, col); it; ++it) {
        const int r = static_cast<int>(it.row());
        const int b = block_of_[static_cast<std::size_t>(r)];
        if (b < 0) {
          rows.push_back(r);
        } else if (b != last_block) {
          for (int i = 0; i < k_.soc_sizes[static_cast<std::size_t>(b)]; ++i)
            rows.push_back(k_.soc_start[static_cast<std::size_t>(b)] + i);
          last_block = b;
        }
      }
    }
    build_pattern();
  }

  bool scaled() const { return scaled_; }

  /// Fills the W-dependent blocks (identity scaling when `w` is null) and factors.
  void factor(const NtScaling* w) {
    w_ = w;
    if (!scaled_) {
      factor_direct();
      return;
    }
    std::vector<Triplet> mt;
    std::vector<double> gcol(static_cast<std::size_t>(m_), 0.0), buf(8);
    for (int col = 0; col < n_; ++col) {
      for (SpMat::InnerIterator it(g_, col); it; ++it) gcol[static_cast<std::size_t>(it.row())] = it.value();
      const auto& rows = m_rows_[static_cast<std::size_t>(col)];
      for (std::size_t e = 0; e < rows.size();) {
        const int r = rows[e];
        const int b = block_of_[static_cast<std::size_t>(r)];
        if (b < 0) {
          const double v = gcol[static_cast<std::size_t>(r)] * (w ? w->orthant_winv(r) : 1.0);
          mt.emplace_back(r, col, v);
          ++e;
          continue;
        }
        const int q = k_.soc_sizes[static_cast<std::size_t>(b)];
        buf.resize(static_cast<std::size_t>(2 * q));
        if (w) {
          w->soc_winv(static_cast<std::size_t>(b), gcol.data() + r, buf.data() + q);
        } else {
          std::copy(gcol.begin() + r, gcol.begin() + r + q, buf.begin() + q);
        }
        for (int i = 0; i < q; ++i) mt.emplace_back(r + i, col, buf[static_cast<std::size_t>(q + i)]);
        e += static_cast<std::size_t>(q);
      }
      for (SpMat::InnerIterator it(g_, col); it; ++it) gcol[static_cast<std::size_t>(it.row())] = 0.0;
    }
    // Triplets are emitted in pattern order, so values map onto slots directly.
    m_mat_.resize(m_, n_);
    m_mat_.setFromTriplets(mt.begin(), mt.end());

    std::size_t e = 0;
    auto put = [&](double v) { csc_.values[slot_[e++]] = v; };
    for (int j = 0; j < n_; ++j) put(kStaticReg);
    for (int k = 0; k < n_; ++k)
      for (SpMat::InnerIterator it(a_, k); it; ++it) put(it.value());
    for (int r = 0; r < p_; ++r) put(-kStaticReg);
    for (const Triplet& t : mt) put(t.value());
    for (int r = 0; r < m_; ++r) put(-1.0 - kStaticReg);
    ldl_.factor(csc_, signs_, kPivotEps, kDynamicReg);
  }

  /// Solves [D A' G'; A -D 0; G 0 -W^2] [x; y; z] = [rx; ry; rz] (D = 0) with
  /// iterative refinement on the unregularized scaled system.
  void solve(const Vec& rx, const Vec& ry, const Vec& rz, Vec& x, Vec& y, Vec& z) const {
    Vec rhs(dim_);
    rhs << rx, ry, (w_ && scaled_ ? w_->apply_winv(rz) : rz);
    Vec sol = raw_solve(rhs);
    const double rn = inf_norm(rhs);
    double err = inf_norm(rhs - multiply(sol));
    for (int it = 0; it < 10 && err > 1e-14 * (1.0 + rn); ++it) {
      const Vec r = rhs - multiply(sol);
      const Vec cand = sol + raw_solve(r);
      const double cerr = inf_norm(rhs - multiply(cand));
      if (!(cerr < err)) break;
      sol = cand;
      err = cerr;
    }
    x = sol.head(n_);
    y = sol.segment(n_, p_);
    z = w_ && scaled_ ? w_->apply_winv(sol.tail(m_)) : Vec(sol.tail(m_));
  }

 private:
  void factor_direct() {
    std::size_t e = 0;
    auto put = [&](double v) { csc_.values[slot_[e++]] = v; };
    for (int j = 0; j < n_; ++j) put(kStaticReg);
    for (int k = 0; k < n_; ++k)
      for (SpMat::InnerIterator it(a_, k); it; ++it) put(it.value());
    for (int r = 0; r < p_; ++r) put(-kStaticReg);
    for (int k = 0; k < n_; ++k)
      for (SpMat::InnerIterator it(g_, k); it; ++it) put(it.value());
    for (int r = 0; r < k_.linear; ++r) put(-(w_ ? w_->orthant_w2()[r] : 1.0) - kStaticReg);
    for (std::size_t c = 0; c < k_.soc_sizes.size(); ++c) {
      const int q = k_.soc_sizes[c];
      std::vector<double> blk;
      if (w_) blk = w_->soc_w2(static_cast<int>(c));
      for (int i = 0; i < q; ++i) {
        for (int j = i; j < q; ++j) {
          const double v = w_ ? blk[static_cast<std::size_t>(i * q + j)] : (i == j ? 1.0 : 0.0);
          put(-v - (i == j ? kStaticReg : 0.0));
        }
      }
    }
    ldl_.factor(csc_, signs_, kPivotEps, kDynamicReg);
  }

  void build_pattern() {
    std::vector<std::pair<int, int>> ent;
    for (int j = 0; j < n_; ++j) ent.emplace_back(j, j);
    for (int k = 0; k < n_; ++k)
      for (SpMat::InnerIterator it(a_, k); it; ++it) ent.emplace_back(k, n_ + static_cast<int>(it.row()));
    for (int r = 0; r < p_; ++r) ent.emplace_back(n_ + r, n_ + r);
    const int zo = n_ + p_;
    if (scaled_) {
      for (int k = 0; k < n_; ++k)
        for (int r : m_rows_[static_cast<std::size_t>(k)]) ent.emplace_back(k, zo + r);
      for (int r = 0; r < m_; ++r) ent.emplace_back(zo + r, zo + r);
    } else {
      for (int k = 0; k < n_; ++k)
        for (SpMat::InnerIterator it(g_, k); it; ++it) ent.emplace_back(k, zo + static_cast<int>(it.row()));
      for (int r = 0; r < k_.linear; ++r) ent.emplace_back(zo + r, zo + r);
      for (std::size_t c = 0; c < k_.soc_sizes.size(); ++c) {
        const int q = k_.soc_sizes[c], o = zo + k_.soc_start[c];
        for (int i = 0; i < q; ++i)
          for (int j = i; j < q; ++j) ent.emplace_back(o + i, o + j);
      }
    }

    // fill-reducing ordering on the symmetric pattern
    std::vector<Triplet> tr;
    tr.reserve(ent.size() * 2);
    for (auto [i, j] : ent) {
      tr.emplace_back(i, j, 1.0);
      if (i != j) tr.emplace_back(j, i, 1.0);
    }
    SpMat pattern(dim_, dim_);
    pattern.setFromTriplets(tr.begin(), tr.end());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(pattern, pinv);
    // pinv maps new position -> old index
    std::vector<int> newpos(dim_);
    for (int i = 0; i < dim_; ++i) newpos[pinv.indices()[i]] = i;

    signs_.assign(dim_, 0);
    for (int i = 0; i < dim_; ++i) signs_[newpos[i]] = i < n_ ? 1 : -1;

    // permuted upper-triangular CSC plus a slot per entry
    std::vector<int> counts(dim_, 0);
    std::vector<std::pair<int, int>> pe(ent.size());
    for (std::size_t e = 0; e < ent.size(); ++e) {
      int i = newpos[ent[e].first], j = newpos[ent[e].second];
      if (i > j) std::swap(i, j);
      pe[e] = {i, j};
      ++counts[j];
    }
    csc_.n = dim_;
    csc_.col_ptr.assign(dim_ + 1, 0);
    for (int j = 0; j < dim_; ++j) csc_.col_ptr[j + 1] = csc_.col_ptr[j] + counts[j];
    std::vector<std::size_t> order(ent.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (pe[x].second != pe[y].second) return pe[x].second < pe[y].second;
      return pe[x].first < pe[y].first;
    });
    csc_.row_idx.assign(ent.size(), 0);
    csc_.values.assign(ent.size(), 0.0);
    slot_.assign(ent.size(), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      csc_.row_idx[pos] = pe[order[pos]].first;
      slot_[order[pos]] = static_cast<int>(pos);
    }
    perm_new_ = std::move(newpos);
    ldl_.analyze(csc_);
  }

  Vec raw_solve(const Vec& rhs) const {
    std::vector<double> t(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) t[perm_new_[i]] = rhs[i];
    ldl_.solve(t);
    Vec out(dim_);
    for (int i = 0; i < dim_; ++i) out[i] = t[perm_new_[i]];
    return out;
  }

  Vec multiply(const Vec& v) const {
    const Vec x = v.head(n_), y = v.segment(n_, p_), z = v.tail(m_);
    Vec out(dim_);
    out.segment(n_, p_) = a_ * x;
    if (scaled_) {
      out.head(n_) = a_.transpose() * y + m_mat_.transpose() * z;
      out.tail(m_) = m_mat_ * x - z;
    } else {
      out.head(n_) = a_.transpose() * y + g_.transpose() * z;
      out.tail(m_) = g_ * x - (w_ ? w_->apply_w2(z) : z);
    }
    return out;
  }

  const SpMat& a_;
  const SpMat& g_;
  const ConeLayout& k_;
  int n_, p_, m_, dim_;
  bool scaled_;
  std::vector<int> block_of_;
  std::vector<std::vector<int>> m_rows_;
  SpMat m_mat_;
  detail::UpperCsc csc_;
  std::vector<int> slot_;
  std::vector<int> signs_;
  std::vector<int> perm_new_;
  mutable detail::LdlFactor ldl_;
  const NtScaling* w_ = nullptr;
};

// ---------------------------------------------------------------------------

struct Metrics {
  double pres = kInf, dres = kInf, gap = kInf, rel_gap = kInf, pobj = 0, dobj = 0;
  double worst() const { return std::max({pres, dres, rel_gap}); }
};

struct Unscaled {
  Vec x, y, z, s;
};

Unscaled unscale(const Scaling& sc, const Vec& x, const Vec& y, const Vec& z, const Vec& s,
                 double tau) {
  Unscaled u;
  u.x = sc.d.cwiseProduct(x) / tau;
  u.y = sc.ea.cwiseProduct(y) / (sc.cost * tau);
  u.z = sc.eg.cwiseProduct(z) / (sc.cost * tau);
  u.s = s.cwiseQuotient(sc.eg) / tau;
  return u;
}

Metrics measure(const StandardForm& orig, const Unscaled& u) {
  Metrics m;
  const double bn = inf_norm(orig.b), hn = inf_norm(orig.h), cn = inf_norm(orig.c);
  const double pa = orig.a.rows() ? inf_norm(orig.a * u.x - orig.b) / (1.0 + bn) : 0.0;
  const double pg = orig.g.rows() ? inf_norm(orig.g * u.x + u.s - orig.h) / (1.0 + hn) : 0.0;
  m.pres = std::max(pa, pg);
  m.dres = inf_norm(orig.c + orig.a.transpose() * u.y + orig.g.transpose() * u.z) / (1.0 + cn);
  m.pobj = orig.c.dot(u.x);
  m.dobj = -orig.b.dot(u.y) - orig.h.dot(u.z);
  m.gap = u.s.dot(u.z);
  m.rel_gap = std::max(std::abs(m.gap), std::abs(m.pobj - m.dobj)) / (1.0 + std::abs(m.pobj));
  return m;
}

}  // namespace

InteriorPointSolver::InteriorPointSolver(SolverOptions options) : options_(options) {
  options_.validate();
}

SolveReport InteriorPointSolver::solve(const ConicProgram& program) const {
  const auto t0 = std::chrono::steady_clock::now();
  program.validate();
  SolveReport rep;
  const int nv = program.num_vars();

  StandardForm sf = to_standard(program, options_.presolve);
  auto finish = [&](SolveReport& r) {
    r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  };
  if (!sf.infeasible_reason.empty()) {
    rep.status = SolveStatus::kInfeasible;
    rep.message = sf.infeasible_reason;
    rep.primal.assign(nv, 0.0);
    return finish(rep);
  }
  const StandardForm orig = sf;  // pre-scaling copy for residuals in original units
  const Scaling sc = equilibrate(sf, options_.equilibrate);

  const int n = sf.n;
  const int p = static_cast<int>(sf.a.rows());
  const int m = static_cast<int>(sf.g.rows());
  const ConeLayout& k = sf.cones;
  const Vec e = detail::identity_element(k);
  const double degree = static_cast<double>(k.degree());

  KktSystem direct(sf.a, sf.g, k, false);
  std::unique_ptr<KktSystem> scaled;
  KktSystem* kkt = &direct;
  auto switch_to_scaled = [&]() {
    if (kkt->scaled() || k.soc_sizes.empty()) return false;
    scaled = std::make_unique<KktSystem>(sf.a, sf.g, k, true);
    kkt = scaled.get();
    return true;
  };

  // Initial point.
  Vec x(n), y(p), z(m), s(m);
  {
    kkt->factor(nullptr);
    Vec x1, y1, z1;
    kkt->solve(Vec::Zero(n), sf.b, sf.h, x1, y1, z1);
    x = x1;
    s = -z1;
    Vec x2, y2, z2;
    kkt->solve(-sf.c, Vec::Zero(p), Vec::Zero(m), x2, y2, z2);
    y = y2;
    z = z2;
    if (m > 0) {
      const double ap = -detail::min_eigenvalue(k, s);
      if (ap >= 0) s += (1.0 + ap) * e;
      const double ad = -detail::min_eigenvalue(k, z);
      if (ad >= 0) z += (1.0 + ad) * e;
    }
  }
  double tau = 1.0, kappa = 1.0;

  NtScaling w(k);
  Metrics best;
  Unscaled best_u;
  double best_tau = 1.0;
  bool converged = false;
  SolveStatus status = SolveStatus::kNumericalFailure;
  std::string message = "iteration limit reached";
  int iter = 0;
  int last_improvement = 0;
  // Iterate before the latest step, restored when the direct KKT form breaks down.
  Vec x_prev, y_prev, z_prev, s_prev;
  double tau_prev = 1.0, kappa_prev = 1.0, pres_prev = kInf;
  bool have_prev = false;
  // Restores the iterate that started iteration `back` and resumes from there.
  auto retry_scaled = [&](int back) {
    if (!have_prev || !switch_to_scaled()) return false;
    x = x_prev;
    y = y_prev;
    z = z_prev;
    s = s_prev;
    tau = tau_prev;
    kappa = kappa_prev;
    have_prev = false;
    while (!rep.trace.empty() && rep.trace.back().iteration >= back) rep.trace.pop_back();
    iter = back - 1;
    return true;
  };

  for (;; ++iter) {
    // residuals of the homogeneous embedding
    const Vec r1 = sf.a.transpose() * y + sf.g.transpose() * z + sf.c * tau;
    const Vec r2 = -(sf.a * x) + sf.b * tau;
    const Vec r3 = -(sf.g * x) + sf.h * tau - s;
    const double r4 = -sf.c.dot(x) - sf.b.dot(y) - sf.h.dot(z) - kappa;

    const Unscaled u = unscale(sc, x, y, z, s, tau);
    const Metrics mt = measure(orig, u);
    // A jump in the primal residual means the direct factorization lost accuracy.
    if (mt.pres > 100.0 * pres_prev && mt.pres > options_.tol && retry_scaled(iter - 1)) continue;
    pres_prev = mt.pres;
    if (mt.worst() < 0.5 * best.worst()) last_improvement = iter;
    if (mt.worst() < best.worst() || iter == 0) {
      best = mt;
      best_u = u;
      best_tau = tau;
    }
    const double mu = (s.dot(z) + kappa * tau) / (degree + 1.0);
    if (options_.record_trace) {
      IterationLog lg;
      lg.iteration = iter;
      lg.primal_objective = mt.pobj + sf.c0;
      lg.dual_objective = mt.dobj + sf.c0;
      lg.primal_residual = mt.pres;
      lg.dual_residual = mt.dres;
      lg.gap = mt.rel_gap;
      lg.mu = mu;
      lg.tau = tau;
      lg.kappa = kappa;
      rep.trace.push_back(lg);
    }
    if (mt.pres <= options_.tol && mt.dres <= options_.tol && mt.rel_gap <= options_.tol) {
      converged = true;
      status = SolveStatus::kOptimal;
      message = "optimal";
      best = mt;
      best_u = u;
      best_tau = tau;
      break;
    }
    // infeasibility certificates on homogeneous (tau-free) quantities
    {
      const Vec yc = sc.ea.cwiseProduct(y) / sc.cost;
      const Vec zc = sc.eg.cwiseProduct(z) / sc.cost;
      const double bh = orig.b.dot(yc) + orig.h.dot(zc);
      if (bh < 0) {
        const double res = inf_norm(orig.a.transpose() * yc + orig.g.transpose() * zc);
        if (res <= options_.tol * -bh) {
          status = SolveStatus::kInfeasible;
          message = "primal infeasible (dual certificate found)";
          break;
        }
      }
      const Vec xc = sc.d.cwiseProduct(x);
      const Vec scu = s.cwiseQuotient(sc.eg);
      const double cx = orig.c.dot(xc);
      if (cx < 0) {
        double res = p ? inf_norm(orig.a * xc) : 0.0;
        if (m) res = std::max(res, inf_norm(orig.g * xc + scu));
        if (res <= options_.tol * -cx) {
          status = SolveStatus::kUnbounded;
          message = "dual infeasible (primal ray found)";
          break;
        }
      }
    }
    if (iter >= options_.max_iter) break;
    if (iter - last_improvement > kStallWindow && best.worst() <= kReducedTol) {
      message = "progress stalled";
      break;
    }

    if (m > 0 && !w.update(s, z)) {
      if (retry_scaled(iter - 1)) continue;
      message = "iterate left the cone interior";
      break;
    }
    kkt->factor(m > 0 ? &w : nullptr);
    const Vec& lam = w.lambda();

    Vec x1, y1, z1;
    kkt->solve(-sf.c, sf.b, sf.h, x1, y1, z1);
    const Vec wz1 = m ? w.apply_w(z1) : Vec();
    const double denom_base = m ? wz1.squaredNorm() : 0.0;

    struct Dir {
      Vec dx, dy, dz, ds;
      double dtau = 0, dkappa = 0;
    };
    auto direction = [&](double sigma, const Vec& ds_rhs, double rhs_k) {
      Dir d;
      const Vec uvec = m ? detail::jordan_divide(k, lam, ds_rhs) : Vec();
      const Vec wu = m ? w.apply_w(uvec) : Vec();
      Vec x2, y2, z2;
      kkt->solve(-(1.0 - sigma) * r1, (1.0 - sigma) * r2, (1.0 - sigma) * r3 - wu, x2, y2, z2);
      const double num = -(1.0 - sigma) * r4 + rhs_k / tau + sf.c.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2);
      d.dtau = num / (kappa / tau + denom_base);
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      // From the linearized primal rows rather than W (u - W dz): equal in exact
      // arithmetic, but it keeps G x + s = h tau when W is badly conditioned.
      d.ds = m ? Vec((1.0 - sigma) * r3 + d.dtau * sf.h - sf.g * d.dx) : Vec();
      d.dkappa = (rhs_k - kappa * d.dtau) / tau;
      return d;
    };
    auto step_to_boundary = [&](const Dir& d) {
      double a = 1e300;
      if (m) {
        a = std::min(a, detail::max_step(k, s, d.ds, a));
        a = std::min(a, detail::max_step(k, z, d.dz, a));
      }
      if (d.dtau < 0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    // predictor
    const Vec lam2 = m ? detail::jordan_product(k, lam, lam) : Vec();
    const Dir aff = direction(0.0, -lam2, -kappa * tau);
    const double a_aff = std::min(1.0, step_to_boundary(aff));
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 0.0, 1.0);

    // corrector
    Vec ds_rhs;
    if (m) {
      const Vec corr = detail::jordan_product(k, w.apply_winv(aff.ds), w.apply_w(aff.dz));
      ds_rhs = -lam2 - corr + sigma * mu * e;
    }
    const double rhs_k = -kappa * tau - aff.dkappa * aff.dtau + sigma * mu;
    Dir d = direction(sigma, ds_rhs, rhs_k);
    double alpha = std::min(1.0, kStepFraction * step_to_boundary(d));
    if (alpha < 1e-3 && switch_to_scaled()) {
      if (options_.record_trace) rep.trace.pop_back();
      --iter;
      continue;
    }
    if (alpha < 1e-3) {
      // Second-order correction pushed into the boundary; take a centering step.
      d = direction(1.0, m ? Vec(-lam2 + mu * e) : Vec(), -kappa * tau + mu);
      alpha = std::min(1.0, kStepFraction * step_to_boundary(d));
    }
    if (options_.record_trace) {
      rep.trace.back().step = alpha;
      rep.trace.back().sigma = sigma;
    }
    if (!(alpha > 1e-12)) {
      message = "step length collapsed";
      break;
    }
    x_prev = x;
    y_prev = y;
    z_prev = z;
    s_prev = s;
    tau_prev = tau;
    kappa_prev = kappa;
    have_prev = true;
    x += alpha * d.dx;
    y += alpha * d.dy;
    z += alpha * d.dz;
    if (m) s += alpha * d.ds;
    tau += alpha * d.dtau;
    kappa += alpha * d.dkappa;
    if (!(tau > 0) || !(kappa > 0) || !x.allFinite() || !z.allFinite()) {
      if (retry_scaled(iter)) continue;
      message = "non-finite iterate";
      break;
    }
  }

  bool reduced = false;
  if (status == SolveStatus::kNumericalFailure && best.worst() <= std::max(kReducedTol, options_.tol)) {
    status = SolveStatus::kOptimal;
    message = "optimal (reduced accuracy: " + message + ")";
    reduced = true;
  }
  rep.status = status;
  rep.message = message;
  rep.iterations = iter;
  (void)converged;
  (void)best_tau;

  // Map back to the original program.
  rep.primal.assign(nv, 0.0);
  rep.equality_duals.assign(program.equalities.size(), 0.0);
  rep.inequality_duals.assign(program.inequalities.size(), 0.0);
  rep.lower_bound_duals.assign(nv, 0.0);
  rep.upper_bound_duals.assign(nv, 0.0);
  rep.cone_duals.assign(program.cones.size(), {});
  if (status == SolveStatus::kInfeasible || status == SolveStatus::kUnbounded) {
    return finish(rep);
  }
  const Unscaled& u = best_u;
  for (int c = 0; c < n; ++c) rep.primal[sf.var_map[c]] = u.x[c];
  for (int j = 0; j < nv; ++j)
    if (sf.fixed[j]) rep.primal[j] = sf.fixed_value[j];
  for (std::size_t r = 0; r < program.equalities.size(); ++r)
    if (sf.eq_row[r] >= 0) rep.equality_duals[r] = -u.y[sf.eq_row[r]];
  for (std::size_t r = 0; r < program.inequalities.size(); ++r)
    if (sf.ineq_row[r] >= 0) rep.inequality_duals[r] = u.z[sf.ineq_row[r]];
  for (int j = 0; j < nv; ++j) {
    if (sf.lower_row[j] >= 0) rep.lower_bound_duals[j] = u.z[sf.lower_row[j]];
    if (sf.upper_row[j] >= 0) rep.upper_bound_duals[j] = u.z[sf.upper_row[j]];
  }
  for (std::size_t c = 0; c < program.cones.size(); ++c) {
    const int o = sf.cone_offset[c];
    const int q = static_cast<int>(program.cones[c].rows.size());
    rep.cone_duals[c].assign(u.z.data() + o, u.z.data() + o + q);
  }
  // Fixed variables: the bound duals absorb the reduced cost.
  bool any_fixed = false;
  for (int j = 0; j < nv; ++j) any_fixed |= sf.fixed[j] != 0;
  if (any_fixed) {
    std::vector<double> rc(program.cost.begin(), program.cost.end());
    for (std::size_t r = 0; r < program.equalities.size(); ++r)
      for (const auto& [j, v] : program.equalities[r].terms) rc[j] -= rep.equality_duals[r] * v;
    for (std::size_t r = 0; r < program.inequalities.size(); ++r)
      for (const auto& [j, v] : program.inequalities[r].terms) rc[j] += rep.inequality_duals[r] * v;
    for (std::size_t c = 0; c < program.cones.size(); ++c)
      for (std::size_t i = 0; i < program.cones[c].rows.size(); ++i)
        for (const auto& [j, v] : program.cones[c].rows[i].terms) rc[j] -= rep.cone_duals[c][i] * v;
    for (int j = 0; j < nv; ++j) {
      if (!sf.fixed[j]) continue;
      rep.lower_bound_duals[j] = std::max(rc[j], 0.0);
      rep.upper_bound_duals[j] = std::max(-rc[j], 0.0);
    }
  }
  rep.objective = program.cost_constant;
  for (int j = 0; j < nv; ++j) rep.objective += program.cost[j] * rep.primal[j];
  rep.dual_objective = best.dobj + sf.c0;
  rep.kkt = kkt_residuals(program, rep);
  if (rep.status == SolveStatus::kOptimal) {
    const double worst = std::max({rep.kkt.primal, rep.kkt.dual, rep.kkt.complementarity});
    if (worst > 10.0 * (reduced ? std::max(kReducedTol, options_.tol) : options_.tol)) {
      rep.status = SolveStatus::kNumericalFailure;
      rep.message = "residuals on the original program exceed tolerance after unscaling";
    }
  }
  return finish(rep);
}

}  // namespace flexmarket
