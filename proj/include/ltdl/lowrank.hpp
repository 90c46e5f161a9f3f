#pragma once

#include <array>
#include <vector>

#include "ltdl/tensor.hpp"

namespace ltdl {

using RankTriple = std::array<std::size_t, 3>;

// Tucker decomposition: t ~= core x_1 U1 x_2 U2 x_3 U3 with orthonormal Ui.
struct TuckerFactors {
  Tensor3 core;
  std::array<Matrix, 3> factors;
};

struct HooiOptions {
  int max_iter = 50;
  double tol = 1e-6;
};

// Per-iteration diagnostics; fit = 1 - ||t - approx||^2 / ||t||^2.
struct HooiTrace {
  std::vector<double> fit;
  int iterations = 0;
};

/// Top-r left singular vectors of m. Columns are orthonormal; when the
/// spectrum is degenerate any orthonormal basis of the subspace is returned.
Matrix leading_left_singular_vectors(const Matrix &m, std::size_t r);

/// Singular values of m in descending order.
Vector singular_values(const Matrix &m);

TuckerFactors hosvd(const Tensor3 &t, const RankTriple &ranks);

/// Higher-order orthogonal iteration initialised from hosvd(t, ranks).
TuckerFactors hooi(const Tensor3 &t, const RankTriple &ranks, const HooiOptions &opts = {},
                   HooiTrace *trace = nullptr);

Tensor3 tucker_reconstruct(const TuckerFactors &f);

/// Best rank-(R1,R2,R3) approximation of t computed with HOOI.
Tensor3 lowrank_approx(const Tensor3 &t, const RankTriple &ranks, const HooiOptions &opts = {});

/// Energy-based multilinear rank heuristic. Per mode, the squared singular
/// values of the unfolding have noise_sigma^2 * (#columns) subtracted, and the
/// smallest rank retaining energy_frac of the remaining mass is chosen. Each
/// rank is clamped to [1, In - 1] (to 1 when In == 1).
RankTriple estimate_ranks(const Tensor3 &t, double noise_sigma, double energy_frac = 0.99);

struct NearlyLowrankTrace {
  std::vector<double> objective;
};

/// Alternating minimisation of ||x - xh||^2 + lambda_r ||xh - T||^2 over xh
/// and rank-constrained T, starting from xh = x.
Tensor3 nearly_lowrank_denoise(const Tensor3 &x, double lambda_r, const RankTriple &ranks,
                               int iters, const HooiOptions &opts = {},
                               NearlyLowrankTrace *trace = nullptr);

void validate_ranks(const Tensor3 &t, const RankTriple &ranks);

} // namespace ltdl
