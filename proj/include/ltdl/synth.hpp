#pragma once

#include <cstdint>
#include <vector>

#include "ltdl/dictionary.hpp"
#include "ltdl/grouping.hpp"
#include "ltdl/metrics.hpp"
#include "ltdl/solver.hpp"

namespace ltdl {

// Synthetic dictionary-recovery data: groups built from random unit-column
// dictionaries and sparse codes whose active mode-3 fibers form a rank-2 matrix.
struct SynthSpec {
  std::size_t atom_dim = 10;
  std::size_t atoms = 12;
  std::size_t slices = 12;      // mode-3 size of every code and group
  std::size_t sparsity = 6;     // upper bound on active atom pairs per group
  std::size_t inner_width = 5;  // active pairs actually used, <= sparsity
  std::size_t factor_rank = 2;
  std::size_t groups = 200;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  DictionaryPair truth;
  std::vector<Tensor3> codes;
  std::vector<Tensor3> clean;
  std::vector<Tensor3> observed;
  // active (spatial atom, spectral atom) pairs per group
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> support;
};

SynthData generate_synthetic(const SynthSpec &spec);

struct RecoveryRunOptions {
  int iterations = 200;
  SolverParams params;
  RankTriple ranks{6, 6, 2};
  std::uint64_t init_seed = 1;
  RecoveryOptions matching;
};

/// Learn dictionaries from the observed synthetic groups; returns the
/// recovery ratio after every outer iteration.
std::vector<double> run_recovery_trial(const SynthData &data, const RecoveryRunOptions &opts);

/// Solver settings used for the synthetic experiment at noise level nu.
SolverParams synthetic_solver_params(double nu);

/// Test scene in [0,1]: a few smooth material maps with distinct spectra
/// (low multilinear rank) plus a weak smooth texture in every band.
Msi synthetic_cube(std::size_t rows, std::size_t cols, std::size_t bands, std::uint64_t seed);

} // namespace ltdl
