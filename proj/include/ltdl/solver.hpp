#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ltdl/dictionary.hpp"
#include "ltdl/grouping.hpp"
#include "ltdl/lowrank.hpp"
#include "ltdl/tensor.hpp"

namespace ltdl {

// ADMM variables for one tensor group.
struct GroupState {
  Tensor3 x;  // observed group, (d_L d_W) x H x s
  Tensor3 z;  // code, atoms_a x atoms_e x s
  Tensor3 c;  // split copy of z carrying the l1 penalty
  Tensor3 t;  // low-rank target, dims of x
  Tensor3 y;  // multiplier, dims of z
  RankTriple ranks{1, 1, 1};
};

GroupState make_group_state(Tensor3 x, const RankTriple &ranks, const DictionaryPair &dict);

struct SolverParams {
  double lambda_s = 0.01;
  double lambda_r = 50.0;
  double rho0 = 0.01;
  double mu = 1.3;
  double rho_max = 1e6;
  int max_outer_iters = 30;
  double tol_residual = 1e-4;
  bool update_dictionaries = true;
  // Start Z from the ridge fit to X instead of zero.
  bool warm_start = true;
  HooiOptions hooi;
  UnitColumnOptions dict;

  void validate() const;
};

// Solves (c D^T D + rho I) z = b on mode-3 rows, D = D^e (x) D^a, using the
// eigendecompositions of D^aT D^a and D^eT D^e.
class CodeSystem {
public:
  CodeSystem(const DictionaryPair &dict, double gram_weight, double rho);

  Tensor3 solve(const Tensor3 &rhs) const;
  double condition_number() const;
  double rho() const { return rho_; }

private:
  Matrix va_, ve_;
  Vector la_, le_;
  double weight_, rho_;
};

/// T <- HOOI(Z x_1 D^a x_2 D^e, ranks); the previous T is kept if it fits better.
Tensor3 update_t(const GroupState &s, const DictionaryPair &dict, const HooiOptions &opts = {});

/// Closed-form minimiser of the augmented Lagrangian over Z.
Tensor3 update_z(const GroupState &s, const DictionaryPair &dict, const CodeSystem &sys,
                 double lambda_r);
Tensor3 update_z(const GroupState &s, const DictionaryPair &dict, double rho, double lambda_r);

/// argmin_Z ||X - Z x_1 D^a x_2 D^e||^2 + (rho/2) ||Z||^2
Tensor3 ridge_code_fit(const Tensor3 &x, const DictionaryPair &dict, double rho);

/// sign(m) max(0, |m| - tau), elementwise.
Tensor3 soft_threshold(const Tensor3 &t, double tau);
double soft_threshold(double m, double tau);

/// soft_{lambda_s/rho}(Z - Y/rho)
Tensor3 update_c(const GroupState &s, double rho, double lambda_s);

/// Y + rho (C - Z)
Tensor3 update_y(const GroupState &s, double rho);

Tensor3 reconstruct(const Tensor3 &z, const DictionaryPair &dict);

/// sum_k ||X - Z x D||^2 + lambda_s ||Z||_1 + lambda_r ||Z x D - T||^2
double objective(std::span<const GroupState> states, const DictionaryPair &dict, double lambda_s,
                 double lambda_r);

/// Augmented Lagrangian of one group at penalty rho.
double augmented_lagrangian(const GroupState &s, const DictionaryPair &dict, double lambda_s,
                            double lambda_r, double rho);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double residual = 0.0;      // max_k ||C - Z||_F / ||Z||_F
  double residual_abs = 0.0;  // max_k ||C - Z||_F
  double dz = 0.0;            // max_k ||Z_{l+1} - Z_l||_F
  double dxhat = 0.0;         // max_k ||Xhat_{l+1} - Xhat_l||_F
  double dict_objective = 0.0;
  double rho = 0.0;           // penalty used during the iteration
  double seconds = 0.0;
};

struct SolverReport {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  std::vector<std::string> warnings;

  std::string to_csv() const;
  std::string to_log() const;
};

class LtdlSolver {
public:
  using Callback = std::function<void(const LtdlSolver &, const IterationRecord &)>;

  LtdlSolver(std::vector<GroupState> states, DictionaryPair dict, SolverParams params);

  /// One outer iteration: per-group T, Z, C; dictionaries; multipliers; rho growth.
  IterationRecord step();

  /// Iterate until the residual test passes or max_outer_iters is reached.
  const SolverReport &run(const Callback &cb = {});

  std::vector<Tensor3> reconstructions() const;

  const std::vector<GroupState> &states() const { return states_; }
  std::vector<GroupState> &mutable_states() { return states_; }
  const DictionaryPair &dictionaries() const { return dict_; }
  const SolverParams &params() const { return params_; }
  const SolverReport &report() const { return report_; }
  double rho() const { return rho_; }
  int iteration() const { return iter_; }

private:
  std::vector<GroupState> states_;
  DictionaryPair dict_;
  SolverParams params_;
  SolverReport report_;
  double rho_;
  int iter_ = 0;
};

struct LtdlConfig {
  // Negative lambdas mean "derive from noise_sigma": 0.1 nu and 500 nu.
  double lambda_s = -1.0;
  double lambda_r = -1.0;
  double rho0 = 0.01;
  double mu = 1.3;
  double rho_max = 1e6;
  int max_outer_iters = 30;
  double tol_residual = 1e-4;
  std::size_t win_rows = 7, win_cols = 7;
  std::size_t step_rows = 3, step_cols = 3;
  double tau_a = 1.5, tau_e = 1.5;
  std::size_t k_clusters = 0; // 0 = max(1, round(S / 50))
  int kmeans_iters = 30;
  double noise_sigma = -1.0;  // negative = estimate from the data
  double energy_frac = 0.99;
  int hooi_iters = 50;
  double hooi_tol = 1e-6;
  int newton_iters = 100;
  bool update_dictionaries = true;
  std::uint64_t seed = 0;

  double effective_lambda_s(double nu) const { return lambda_s >= 0.0 ? lambda_s : 0.1 * nu; }
  double effective_lambda_r(double nu) const { return lambda_r >= 0.0 ? lambda_r : 500.0 * nu; }
  SolverParams solver_params(double nu) const;
  void validate() const;
};

struct DenoiseResult {
  Msi output;
  DictionaryPair dict;
  SolverReport report;
  double noise_sigma = 0.0;
  std::size_t num_groups = 0;
  std::size_t num_blocks = 0;
};

/// Robust noise level: per band, MAD of a 3x3 Laplacian response scaled to
/// the input std, averaged over bands.
double estimate_noise_sigma(const Msi &msi);

DenoiseResult denoise(const Msi &msi, const LtdlConfig &cfg,
                      const LtdlSolver::Callback &cb = {});

} // namespace ltdl
