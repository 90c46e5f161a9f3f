#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltdl/grouping.hpp"
#include "ltdl/tensor.hpp"

namespace ltdl {

// Shared spatial (d_a) and spectral (d_e) dictionaries with unit-norm atoms.
struct DictionaryPair {
  Matrix spatial;  // (d_L d_W) x round(tau_a d_L d_W)
  Matrix spectral; // H x round(tau_e H)
  double tau_a = 1.0;
  double tau_e = 1.0;

  /// spectral (x) spatial; the dictionary acting on mode-3 unfoldings.
  Matrix equivalent() const { return kron(spectral, spatial); }
};

/// Number of atoms for a dictionary with `rows` rows and redundancy `tau`.
std::size_t atom_count(std::size_t rows, double tau);

/// Atoms drawn from random spatial / spectral fibers of the groups and scaled
/// to unit norm. Zero or duplicate fibers are replaced by random unit vectors.
DictionaryPair init_dictionaries(std::span<const TensorGroup> groups, double tau_a, double tau_e,
                                 std::uint64_t seed);

/// Dictionary with i.i.d. Gaussian columns scaled to unit norm.
Matrix random_unit_columns(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct UnitColumnOptions {
  int newton_iters = 100;
  // Convergence tolerance on max_i | ||d_i||^2 - 1 |.
  double tol = 1e-10;
};

struct UnitColumnResult {
  Matrix d;
  Vector duals;             // one multiplier per atom
  double objective = 0.0;   // ||O - D A||_F^2
  int iterations = 0;
  bool converged = false;
  // A A^T was too close to singular; D then solves
  // D (A A^T + Gamma) = O A^T + ridge_eps * D_prev.
  bool ridge_used = false;
  double ridge_eps = 0.0;
  bool used_fallback = false;
  std::size_t dead_atoms = 0;    // atoms with no code energy, kept from the previous dictionary
  std::size_t renormalized = 0;  // atoms explicitly rescaled after the solve
  bool kept_previous = false;    // the previous dictionary had the lower objective
};

// Sufficient statistics of min ||O - D A||_F^2: O A^T, A A^T and ||O||_F^2.
struct LsGram {
  Matrix oat;
  Matrix aat;
  double oo = 0.0;

  void accumulate(const Eigen::Ref<const Matrix> &o, const Eigen::Ref<const Matrix> &a);
};

/// ||O - D A||^2 evaluated from the Gram statistics.
double ls_objective(const LsGram &g, const Matrix &d);

/// Minimise ||O - D A||_F^2 subject to unit-norm columns of D via Newton
/// ascent on the Lagrange dual, D = (O A^T)(A A^T + Gamma)^{-1}. When
/// `previous` is supplied, dead atoms are copied from it and the result never
/// has a larger objective than it.
UnitColumnResult solve_unit_column_ls(const LsGram &g, const Matrix *previous = nullptr,
                                      const UnitColumnOptions &opts = {});
UnitColumnResult solve_unit_column_ls(const Matrix &o, const Matrix &a,
                                      const UnitColumnOptions &opts = {});

/// Least-squares target of the dictionary step: (X + lambda_r T) / (1 + lambda_r).
Tensor3 blended_target(const Tensor3 &x, const Tensor3 &t, double lambda_r);

/// sum_k || O^(k) - Z^(k) x_1 D^a x_2 D^e ||_F^2
double stacked_fit(std::span<const Tensor3> targets, std::span<const Tensor3> codes,
                   const DictionaryPair &dict);

/// D^a update with A = Z x_2 D^e and mode-1 unfoldings stacked over groups.
UnitColumnResult update_spatial_dictionary(std::span<const Tensor3> targets,
                                           std::span<const Tensor3> codes,
                                           const DictionaryPair &dict,
                                           const UnitColumnOptions &opts = {});

/// D^e update with E = Z x_1 D^a and mode-2 unfoldings stacked over groups.
UnitColumnResult update_spectral_dictionary(std::span<const Tensor3> targets,
                                            std::span<const Tensor3> codes,
                                            const DictionaryPair &dict,
                                            const UnitColumnOptions &opts = {});

} // namespace ltdl
