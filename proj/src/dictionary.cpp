#include "ltdl/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace ltdl {

std::size_t atom_count(std::size_t rows, double tau) {
  if (!(tau >= 1.0))
    throw std::invalid_argument("redundancy ratio must be >= 1");
  return std::size_t(std::llround(tau * double(rows)));
}

Matrix random_unit_columns(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Matrix d{Eigen::Index(rows), Eigen::Index(cols)};
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    do {
      for (Eigen::Index i = 0; i < d.rows(); ++i)
        d(i, j) = n01(rng);
    } while (d.col(j).norm() == 0.0);
    d.col(j).normalize();
  }
  return d;
}

namespace {

// Columns drawn from `fiber`, normalised, with degenerate picks replaced.
template <typename FiberFn>
Matrix sample_atoms(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, FiberFn &&fiber) {
  std::normal_distribution<double> n01;
  Matrix d{Eigen::Index(rows), Eigen::Index(cols)};
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    Vector v = fiber();
    bool bad = !(v.norm() > 1e-12);
    if (!bad) {
      v.normalize();
      for (Eigen::Index p = 0; p < j && !bad; ++p)
        bad = std::abs(d.col(p).dot(v)) > 1.0 - 1e-10;
    }
    if (bad || rows == 1) {
      if (rows == 1) {
        v = Vector::Ones(1);
      } else {
        do {
          for (Eigen::Index i = 0; i < v.size(); ++i)
            v(i) = n01(rng);
        } while (v.norm() == 0.0);
        v.normalize();
      }
    }
    d.col(j) = v;
  }
  return d;
}

} // namespace

DictionaryPair init_dictionaries(std::span<const TensorGroup> groups, double tau_a, double tau_e,
                                 std::uint64_t seed) {
  if (groups.empty())
    throw std::invalid_argument("init_dictionaries: no groups");
  const std::size_t pix = groups.front().x.dims()[0];
  const std::size_t bands = groups.front().x.dims()[1];
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_group(0, groups.size() - 1);

  DictionaryPair pair;
  pair.tau_a = tau_a;
  pair.tau_e = tau_e;
  pair.spatial = sample_atoms(pix, atom_count(pix, tau_a), rng, [&]() -> Vector {
    const Tensor3 &x = groups[pick_group(rng)].x;
    std::uniform_int_distribution<std::size_t> b(0, x.dims()[1] - 1), s(0, x.dims()[2] - 1);
    const std::size_t band = b(rng), member = s(rng);
    return x.slice(member).col(Eigen::Index(band));
  });
  pair.spectral = sample_atoms(bands, atom_count(bands, tau_e), rng, [&]() -> Vector {
    const Tensor3 &x = groups[pick_group(rng)].x;
    std::uniform_int_distribution<std::size_t> p(0, x.dims()[0] - 1), s(0, x.dims()[2] - 1);
    const std::size_t pixel = p(rng), member = s(rng);
    return x.slice(member).row(Eigen::Index(pixel)).transpose();
  });
  return pair;
}

void LsGram::accumulate(const Eigen::Ref<const Matrix> &o, const Eigen::Ref<const Matrix> &a) {
  if (o.cols() != a.cols())
    throw std::invalid_argument("LsGram: O and A must have the same number of columns");
  if (oat.size() == 0) {
    oat = Matrix::Zero(o.rows(), a.rows());
    aat = Matrix::Zero(a.rows(), a.rows());
  }
  oat.noalias() += o * a.transpose();
  aat.selfadjointView<Eigen::Lower>().rankUpdate(a);
  oo += o.squaredNorm();
}

namespace {

Matrix full_gram(const Matrix &aat_lower) {
  Matrix full = aat_lower.selfadjointView<Eigen::Lower>();
  return full;
}

double objective_from(const Matrix &oat, const Matrix &aat, double oo, const Matrix &d) {
  // ||O||^2 - 2 tr(D^T O A^T) + tr(D A A^T D^T)
  return oo - 2.0 * (d.array() * oat.array()).sum() + (d * aat).cwiseProduct(d).sum();
}

struct DualPoint {
  Vector gamma;
  Matrix d;     // B M^{-1}
  Matrix minv;  // M^{-1}
  double value = -std::numeric_limits<double>::infinity();
  Vector grad;  // ||d_i||^2 - 1
};

// Evaluate the dual at gamma; nullopt when A A^T + diag(gamma) is not PD.
std::optional<DualPoint> eval_dual(const Matrix &b, const Matrix &aat, double oo,
                                   const Vector &gamma) {
  Matrix m = aat;
  m.diagonal() += gamma;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    return std::nullopt;
  const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
  const double max_pivot = llt.matrixLLT().diagonal().maxCoeff();
  if (!(min_pivot > 1e-12 * max_pivot))
    return std::nullopt;
  DualPoint p;
  p.gamma = gamma;
  p.minv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  p.d = llt.solve(b.transpose()).transpose();
  p.value = oo - (b.array() * p.d.array()).sum() - gamma.sum();
  p.grad = p.d.colwise().squaredNorm().transpose().array() - 1.0;
  if (!std::isfinite(p.value) || !p.d.allFinite())
    return std::nullopt;
  return p;
}

// Coordinate-wise bisection on ||d_i(gamma_i)||^2 = 1, used when Newton stalls.
// Each coordinate move is an exact ascent step on the concave dual.
DualPoint coordinate_bisection(const Matrix &b, const Matrix &aat, double oo, DualPoint cur,
                               double tol, int sweeps) {
  const Eigen::Index q = cur.gamma.size();
  const double scale = std::max(1e-12, aat.diagonal().mean());
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    if (cur.grad.cwiseAbs().maxCoeff() < tol)
      break;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (std::abs(cur.grad(i)) < tol)
        continue;
      // f(g_i) = ||d_i||^2 - 1 is non-increasing in g_i.
      auto at = [&](double gi) {
        Vector g = cur.gamma;
        g(i) = gi;
        return eval_dual(b, aat, oo, g);
      };
      double lo = cur.gamma(i), hi = cur.gamma(i);
      std::optional<DualPoint> plo, phi;
      if (cur.grad(i) > 0) {
        lo = cur.gamma(i);
        plo = cur;
        double step = scale;
        for (int k = 0; k < 200; ++k, step *= 2.0) {
          phi = at(lo + step);
          if (phi && phi->grad(i) <= 0) {
            hi = lo + step;
            break;
          }
          phi.reset();
        }
        if (!phi)
          continue;
      } else {
        hi = cur.gamma(i);
        phi = cur;
        double step = scale;
        std::optional<DualPoint> cand;
        double last_ok = hi;
        for (int k = 0; k < 200; ++k, step *= 2.0) {
          cand = at(hi - step);
          if (!cand) {
            // shrink toward the PD boundary
            double bad = hi - step, good = last_ok;
            for (int j = 0; j < 60 && !cand; ++j) {
              const double mid = 0.5 * (bad + good);
              auto pm = at(mid);
              if (!pm) {
                bad = mid;
              } else if (pm->grad(i) >= 0) {
                cand = pm;
                lo = mid;
              } else {
                good = mid;
                phi = pm;
                hi = mid;
              }
            }
            break;
          }
          if (cand->grad(i) >= 0) {
            lo = hi - step;
            break;
          }
          last_ok = hi - step;
          phi = cand;
          hi = last_ok;
          cand.reset();
        }
        if (!cand)
          continue;
        plo = cand;
      }
      DualPoint best = std::abs(plo->grad(i)) < std::abs(phi->grad(i)) ? *plo : *phi;
      for (int k = 0; k < 100 && std::abs(best.grad(i)) >= 0.1 * tol; ++k) {
        const double mid = 0.5 * (lo + hi);
        auto pm = at(mid);
        if (!pm)
          break;
        if (pm->grad(i) > 0)
          lo = mid;
        else
          hi = mid;
        if (std::abs(pm->grad(i)) < std::abs(best.grad(i)))
          best = *pm;
        if (hi - lo <= 1e-16 * std::max(1.0, std::abs(mid)))
          break;
      }
      if (best.value >= cur.value - 1e-12 * std::abs(cur.value))
        cur = std::move(best);
    }
  }
  return cur;
}

} // namespace

double ls_objective(const LsGram &g, const Matrix &d) {
  return objective_from(g.oat, full_gram(g.aat), g.oo, d);
}

namespace {

struct NewtonOutcome {
  std::optional<DualPoint> point;
  int iterations = 0;
  bool converged = false;
};

// Newton ascent on the dual from gamma0. Stops early when the line search
// keeps cutting the step, which signals a supremum on the PD boundary.
NewtonOutcome dual_newton(const Matrix &b, const Matrix &a, double oo, const Vector &gamma0,
                          const UnitColumnOptions &opts) {
  NewtonOutcome out;
  out.point = eval_dual(b, a, oo, gamma0);
  if (!out.point)
    return out;
  auto &cur = out.point;
  const double noise = 1e-13 * (std::abs(oo) + 1.0);
  int short_steps = 0;
  for (; out.iterations < opts.newton_iters; ++out.iterations) {
    if (cur->grad.cwiseAbs().maxCoeff() < opts.tol) {
      out.converged = true;
      break;
    }
    Matrix neg_hess = 2.0 * cur->minv.cwiseProduct(cur->d.transpose() * cur->d);
    neg_hess.diagonal().array() += 1e-14 * std::max(1e-300, neg_hess.diagonal().maxCoeff());
    const Vector step = Eigen::LDLT<Matrix>(neg_hess).solve(cur->grad);
    if (!step.allFinite())
      break;
    const double slope = cur->grad.dot(step);
    double t = 1.0;
    std::optional<DualPoint> next;
    for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
      auto cand = eval_dual(b, a, oo, cur->gamma + t * step);
      if (cand && cand->value >= cur->value + 1e-4 * t * slope - noise) {
        next = std::move(cand);
        break;
      }
    }
    if (!next)
      break;
    short_steps = t < 1.0 / 64.0 ? short_steps + 1 : 0;
    cur = std::move(next);
    if (short_steps >= 4)
      break;
  }
  return out;
}

} // namespace

UnitColumnResult solve_unit_column_ls(const LsGram &g, const Matrix *previous,
                                      const UnitColumnOptions &opts) {
  const Matrix aat = full_gram(g.aat);
  const Eigen::Index m = g.oat.rows(), p = g.oat.cols();
  if (aat.rows() != p)
    throw std::invalid_argument("solve_unit_column_ls: inconsistent Gram shapes");
  if (previous && (previous->rows() != m || previous->cols() != p))
    throw std::invalid_argument("solve_unit_column_ls: previous dictionary has wrong shape");

  UnitColumnResult res;
  res.d = Matrix::Zero(m, p);
  res.duals = Vector::Zero(p);

  // Atoms without code energy do not affect the objective.
  const double diag_max = std::max(aat.diagonal().maxCoeff(), 0.0);
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (aat(i, i) > 1e-14 * diag_max && diag_max > 0.0)
      active.push_back(i);
  }
  res.dead_atoms = std::size_t(p) - active.size();
  const Matrix fallback_atoms =
      previous ? *previous : random_unit_columns(std::size_t(m), std::size_t(p), 0);

  const auto q = Eigen::Index(active.size());
  if (q > 0) {
    Matrix b(m, q), a(q, q), anchor(m, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      b.col(j) = g.oat.col(active[j]);
      anchor.col(j) = fallback_atoms.col(active[j]);
      for (Eigen::Index i = 0; i < q; ++i)
        a(i, j) = aat(active[i], active[j]);
    }
    NewtonOutcome sol = dual_newton(b, a, g.oo, 0.1 * a.diagonal(), opts);
    res.iterations = sol.iterations;

    // Rank-deficient A A^T puts the dual supremum on the boundary of the PD
    // cone. Adding eps ||D - D_prev||^2, which is linear in D on the feasible
    // set, moves it inside while keeping the update monotone.
    if (!sol.converged) {
      const double scale = std::max(1e-300, a.diagonal().mean());
      for (double eps = 1e-10 * scale; eps <= 1e-2 * scale && !sol.converged; eps *= 100.0) {
        res.ridge_used = true;
        Matrix a_eps = a;
        a_eps.diagonal().array() += eps;
        const Matrix b_eps = b + eps * anchor;
        const double oo_eps = g.oo + eps * double(q);
        NewtonOutcome retry = dual_newton(b_eps, a_eps, oo_eps, 0.1 * a.diagonal(), opts);
        res.iterations += retry.iterations;
        if (retry.point) {
          retry.point->gamma.array() += eps;
          res.ridge_eps = eps;
          sol = std::move(retry);
        }
      }
    }
    if (!sol.point)
      throw std::runtime_error("solve_unit_column_ls: Gram matrix is not positive definite");
    if (!sol.converged) {
      res.used_fallback = true;
      *sol.point = coordinate_bisection(b, a, g.oo, *sol.point, opts.tol, 50);
      sol.converged = sol.point->grad.cwiseAbs().maxCoeff() < opts.tol;
    }
    res.converged = sol.converged;
    for (Eigen::Index j = 0; j < q; ++j) {
      res.d.col(active[j]) = sol.point->d.col(j);
      res.duals(active[j]) = sol.point->gamma(j);
    }
  }

  std::vector<bool> is_active(std::size_t(p), false);
  for (auto i : active)
    is_active[std::size_t(i)] = true;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!is_active[std::size_t(j)]) {
      res.d.col(j) = fallback_atoms.col(j);
      continue;
    }
    const double n = res.d.col(j).norm();
    if (std::abs(n - 1.0) > 1e-10) {
      ++res.renormalized;
      if (n > 1e-300)
        res.d.col(j) /= n;
      else
        res.d.col(j) = fallback_atoms.col(j);
    }
  }

  res.objective = objective_from(g.oat, aat, g.oo, res.d);
  if (previous) {
    const double prev_obj = objective_from(g.oat, aat, g.oo, *previous);
    if (prev_obj < res.objective) {
      res.d = *previous;
      res.objective = prev_obj;
      res.kept_previous = true;
    }
  }
  return res;
}

UnitColumnResult solve_unit_column_ls(const Matrix &o, const Matrix &a,
                                      const UnitColumnOptions &opts) {
  LsGram g;
  g.accumulate(o, a);
  return solve_unit_column_ls(g, nullptr, opts);
}

Tensor3 blended_target(const Tensor3 &x, const Tensor3 &t, double lambda_r) {
  if (t.empty())
    return x;
  Tensor3 o = x;
  o.flat() = (x.flat() + lambda_r * t.flat()) / (1.0 + lambda_r);
  return o;
}

namespace {

void check_spans(std::span<const Tensor3> targets, std::span<const Tensor3> codes) {
  if (targets.size() != codes.size() || targets.empty())
    throw std::invalid_argument("dictionary update: need one code tensor per target tensor");
}

} // namespace

double stacked_fit(std::span<const Tensor3> targets, std::span<const Tensor3> codes,
                   const DictionaryPair &dict) {
  check_spans(targets, codes);
  double total = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Tensor3 rec = mode_product(mode_product(codes[k], dict.spatial, 1), dict.spectral, 2);
    total += (targets[k].flat() - rec.flat()).squaredNorm();
  }
  return total;
}

UnitColumnResult update_spatial_dictionary(std::span<const Tensor3> targets,
                                           std::span<const Tensor3> codes,
                                           const DictionaryPair &dict,
                                           const UnitColumnOptions &opts) {
  check_spans(targets, codes);
  LsGram g;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Tensor3 a = mode_product(codes[k], dict.spectral, 2);
    g.accumulate(targets[k].mode1_view(), a.mode1_view());
  }
  return solve_unit_column_ls(g, &dict.spatial, opts);
}

UnitColumnResult update_spectral_dictionary(std::span<const Tensor3> targets,
                                            std::span<const Tensor3> codes,
                                            const DictionaryPair &dict,
                                            const UnitColumnOptions &opts) {
  check_spans(targets, codes);
  LsGram g;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Tensor3 e = mode_product(codes[k], dict.spatial, 1);
    g.accumulate(unfold(targets[k], 2), unfold(e, 2));
  }
  return solve_unit_column_ls(g, &dict.spectral, opts);
}

} // namespace ltdl
