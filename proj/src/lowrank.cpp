#include "ltdl/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace ltdl {

void validate_ranks(const Tensor3 &t, const RankTriple &ranks) {
  for (int n = 0; n < 3; ++n) {
    if (ranks[n] < 1)
      throw std::invalid_argument("rank for mode " + std::to_string(n + 1) + " must be >= 1");
    if (ranks[n] > t.dims()[n])
      throw std::invalid_argument("rank " + std::to_string(ranks[n]) + " exceeds dimension " +
                                  std::to_string(t.dims()[n]) + " of mode " +
                                  std::to_string(n + 1));
  }
}

Matrix leading_left_singular_vectors(const Matrix &m, std::size_t r) {
  const Eigen::Index rows = m.rows();
  const auto want = Eigen::Index(r);
  if (rows == 1)
    return Matrix::Identity(1, 1);
  if (m.cols() >= rows) {
    // Gram route: eigenvectors of m m^T, ascending order from Eigen.
    Matrix gram = m * m.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    return es.eigenvectors().rightCols(want).rowwise().reverse();
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(want);
}

Vector singular_values(const Matrix &m) {
  if (m.size() == 0)
    return Vector();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

namespace {

// t multiplied by U^T along every mode except `skip`.
Tensor3 project_except(const Tensor3 &t, const std::array<Matrix, 3> &u, int skip) {
  Tensor3 out = t;
  for (int n = 0; n < 3; ++n)
    if (n != skip)
      out = mode_product(out, u[n].transpose(), n + 1);
  return out;
}

Tensor3 project_all(const Tensor3 &t, const std::array<Matrix, 3> &u) {
  Tensor3 out = mode_product(t, u[0].transpose(), 1);
  out = mode_product(out, u[1].transpose(), 2);
  return mode_product(out, u[2].transpose(), 3);
}

double fit_of(double core_sq, double total_sq) {
  return total_sq > 0.0 ? 1.0 - std::max(0.0, total_sq - core_sq) / total_sq : 1.0;
}

} // namespace

TuckerFactors hosvd(const Tensor3 &t, const RankTriple &ranks) {
  validate_ranks(t, ranks);
  TuckerFactors f;
  for (int n = 0; n < 3; ++n)
    f.factors[n] = leading_left_singular_vectors(unfold(t, n + 1), ranks[n]);
  f.core = project_all(t, f.factors);
  return f;
}

TuckerFactors hooi(const Tensor3 &t, const RankTriple &ranks, const HooiOptions &opts,
                   HooiTrace *trace) {
  if (opts.max_iter < 1)
    throw std::invalid_argument("hooi: max_iter must be >= 1");
  TuckerFactors f = hosvd(t, ranks);
  const double total_sq = t.flat().squaredNorm();
  double fit = fit_of(f.core.flat().squaredNorm(), total_sq);
  if (trace) {
    trace->fit.assign(1, fit);
    trace->iterations = 0;
  }
  if (total_sq == 0.0)
    return f;

  for (int it = 0; it < opts.max_iter; ++it) {
    for (int n = 0; n < 3; ++n) {
      if (t.dims()[n] == 1)
        continue;
      const Tensor3 partial = project_except(t, f.factors, n);
      f.factors[n] = leading_left_singular_vectors(unfold(partial, n + 1), ranks[n]);
    }
    f.core = project_all(t, f.factors);
    const double new_fit = fit_of(f.core.flat().squaredNorm(), total_sq);
    if (trace) {
      trace->fit.push_back(new_fit);
      trace->iterations = it + 1;
    }
    const double improvement = new_fit - fit;
    fit = new_fit;
    if (std::abs(improvement) < opts.tol * std::max(std::abs(fit), 1e-300))
      break;
  }
  return f;
}

Tensor3 tucker_reconstruct(const TuckerFactors &f) {
  for (int n = 0; n < 3; ++n)
    if (std::size_t(f.factors[n].cols()) != f.core.dims()[n])
      throw std::invalid_argument("tucker_reconstruct: factor " + std::to_string(n + 1) +
                                  " has " + std::to_string(f.factors[n].cols()) +
                                  " columns, core mode size is " +
                                  std::to_string(f.core.dims()[n]));
  Tensor3 out = mode_product(f.core, f.factors[0], 1);
  out = mode_product(out, f.factors[1], 2);
  return mode_product(out, f.factors[2], 3);
}

Tensor3 lowrank_approx(const Tensor3 &t, const RankTriple &ranks, const HooiOptions &opts) {
  return tucker_reconstruct(hooi(t, ranks, opts));
}

RankTriple estimate_ranks(const Tensor3 &t, double noise_sigma, double energy_frac) {
  if (!(energy_frac > 0.0 && energy_frac <= 1.0))
    throw std::invalid_argument("estimate_ranks: energy_frac must lie in (0, 1]");
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("estimate_ranks: noise_sigma must be >= 0");
  RankTriple ranks{1, 1, 1};
  for (int n = 0; n < 3; ++n) {
    const std::size_t in = t.dims()[n];
    if (in <= 1)
      continue;
    const Matrix m = unfold(t, n + 1);
    const Vector sv = singular_values(m);
    const double floor = noise_sigma * noise_sigma * double(m.cols());
    std::vector<double> energy(std::size_t(sv.size()));
    double total = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      energy[std::size_t(i)] = std::max(0.0, sv(i) * sv(i) - floor);
      total += energy[std::size_t(i)];
    }
    std::size_t r = 1;
    if (total > 0.0) {
      const double target = energy_frac * total * (1.0 - 1e-12);
      double cum = 0.0;
      r = energy.size();
      for (std::size_t i = 0; i < energy.size(); ++i) {
        cum += energy[i];
        if (cum >= target) {
          r = i + 1;
          break;
        }
      }
    }
    ranks[n] = std::clamp<std::size_t>(r, 1, in - 1);
  }
  return ranks;
}

Tensor3 nearly_lowrank_denoise(const Tensor3 &x, double lambda_r, const RankTriple &ranks,
                               int iters, const HooiOptions &opts, NearlyLowrankTrace *trace) {
  if (!(lambda_r > 0.0))
    throw std::invalid_argument("nearly_lowrank_denoise: lambda_r must be > 0");
  validate_ranks(x, ranks);
  auto objective = [&](const Tensor3 &xh, const Tensor3 &lr) {
    return (x.flat() - xh.flat()).squaredNorm() + lambda_r * (xh.flat() - lr.flat()).squaredNorm();
  };

  Tensor3 xh = x;
  Tensor3 lr;
  for (int it = 0; it < iters; ++it) {
    Tensor3 candidate = lowrank_approx(xh, ranks, opts);
    // HOOI is a local method; never accept a worse low-rank target.
    if (lr.empty() ||
        (xh.flat() - candidate.flat()).squaredNorm() <= (xh.flat() - lr.flat()).squaredNorm())
      lr = std::move(candidate);
    xh.flat() = (x.flat() + lambda_r * lr.flat()) / (1.0 + lambda_r);
    if (trace)
      trace->objective.push_back(objective(xh, lr));
  }
  return xh;
}

} // namespace ltdl
