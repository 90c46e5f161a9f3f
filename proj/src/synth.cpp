#include "ltdl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ltdl/metrics.hpp"

namespace ltdl {

void SynthSpec::validate() const {
  if (atom_dim == 0 || atoms == 0 || slices == 0 || groups == 0)
    throw std::invalid_argument("synthetic spec: sizes must be positive");
  if (inner_width == 0 || inner_width > sparsity)
    throw std::invalid_argument("synthetic spec: inner width must lie in [1, sparsity]");
  if (inner_width > atoms * atoms)
    throw std::invalid_argument("synthetic spec: more active pairs than atom pairs");
  if (factor_rank == 0)
    throw std::invalid_argument("synthetic spec: factor rank must be positive");
  if (!(noise >= 0.0))
    throw std::invalid_argument("synthetic spec: noise must be non-negative");
}

SynthData generate_synthetic(const SynthSpec &spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01;
  SynthData out;
  out.truth.spatial = random_unit_columns(spec.atom_dim, spec.atoms, rng());
  out.truth.spectral = random_unit_columns(spec.atom_dim, spec.atoms, rng());
  out.truth.tau_a = out.truth.tau_e = double(spec.atoms) / double(spec.atom_dim);

  std::vector<std::size_t> pairs(spec.atoms * spec.atoms);
  std::iota(pairs.begin(), pairs.end(), 0);
  std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
  for (std::size_t g = 0; g < spec.groups; ++g) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    Matrix lhs(Eigen::Index(spec.slices), Eigen::Index(spec.factor_rank));
    Matrix rhs(Eigen::Index(spec.factor_rank), Eigen::Index(spec.inner_width));
    for (Eigen::Index i = 0; i < lhs.size(); ++i)
      lhs.data()[i] = n01(rng);
    for (Eigen::Index i = 0; i < rhs.size(); ++i)
      rhs.data()[i] = n01(rng);
    const Matrix fibers = lhs * rhs; // slices x inner_width

    Tensor3 z({spec.atoms, spec.atoms, spec.slices});
    std::vector<std::pair<std::size_t, std::size_t>> support;
    for (std::size_t p = 0; p < spec.inner_width; ++p) {
      const std::size_t i = pairs[p] % spec.atoms, j = pairs[p] / spec.atoms;
      support.emplace_back(i, j);
      for (std::size_t s = 0; s < spec.slices; ++s)
        z(i, j, s) = fibers(Eigen::Index(s), Eigen::Index(p));
    }
    Tensor3 clean = reconstruct(z, out.truth);
    Tensor3 observed = clean;
    if (spec.noise > 0.0)
      for (double &v : observed.data())
        v += noise(rng);
    out.codes.push_back(std::move(z));
    out.clean.push_back(std::move(clean));
    out.observed.push_back(std::move(observed));
    out.support.push_back(std::move(support));
  }
  return out;
}

SolverParams synthetic_solver_params(double nu) {
  SolverParams p;
  // With the image defaults (0.1 nu, mu 1.3) the penalty grows too fast here:
  // codes lock in before the atoms have moved.
  p.lambda_s = 0.3;
  p.lambda_r = 500.0 * nu;
  p.rho0 = 0.01;
  p.mu = 1.05;
  p.max_outer_iters = 200;
  p.tol_residual = 0.0;
  return p;
}

std::vector<double> run_recovery_trial(const SynthData &data, const RecoveryRunOptions &opts) {
  if (data.observed.empty())
    throw std::invalid_argument("run_recovery_trial: no groups");
  std::vector<TensorGroup> groups;
  groups.reserve(data.observed.size());
  for (const auto &x : data.observed)
    groups.push_back({x, {}});
  const double tau_a = double(data.truth.spatial.cols()) / double(data.truth.spatial.rows());
  const double tau_e = double(data.truth.spectral.cols()) / double(data.truth.spectral.rows());
  DictionaryPair dict = init_dictionaries(groups, tau_a, tau_e, opts.init_seed);

  std::vector<GroupState> states;
  states.reserve(groups.size());
  for (const auto &g : groups) {
    RankTriple r = opts.ranks;
    for (int n = 0; n < 3; ++n)
      r[n] = std::min(r[n], g.x.dims()[n]);
    states.push_back(make_group_state(g.x, r, dict));
  }
  SolverParams params = opts.params;
  params.max_outer_iters = opts.iterations;
  LtdlSolver solver(std::move(states), std::move(dict), params);
  std::vector<double> ratios;
  ratios.reserve(std::size_t(opts.iterations));
  for (int it = 0; it < opts.iterations; ++it) {
    solver.step();
    ratios.push_back(dictionary_recovery_ratio(data.truth, solver.dictionaries(), opts.matching));
  }
  return ratios;
}

Msi synthetic_cube(std::size_t rows, std::size_t cols, std::size_t bands, std::uint64_t seed) {
  if (rows == 0 || cols == 0 || bands == 0)
    throw std::invalid_argument("synthetic_cube: sizes must be positive");
  constexpr std::size_t materials = 4;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  const double two_pi = 2.0 * std::numbers::pi;

  // Smooth spectra: a sloped baseline plus one Gaussian bump each.
  Matrix spectra{Eigen::Index(bands), Eigen::Index(materials)};
  for (std::size_t m = 0; m < materials; ++m) {
    const double base = 0.2 + 0.5 * u01(rng), slope = 0.4 * (u01(rng) - 0.5);
    const double centre = u01(rng), width = 0.1 + 0.2 * u01(rng), amp = 0.5 * u01(rng);
    for (std::size_t b = 0; b < bands; ++b) {
      const double x = bands > 1 ? double(b) / double(bands - 1) : 0.0;
      spectra(Eigen::Index(b), Eigen::Index(m)) =
          base + slope * (x - 0.5) + amp * std::exp(-0.5 * std::pow((x - centre) / width, 2));
    }
  }

  // Soft abundance maps from separable low-frequency cosines.
  std::vector<Matrix> maps;
  for (std::size_t m = 0; m < materials; ++m) {
    const double fr = 0.5 + 1.5 * u01(rng), fc = 0.5 + 1.5 * u01(rng);
    const double pr = two_pi * u01(rng), pc = two_pi * u01(rng);
    Vector vr{Eigen::Index(rows)}, vc{Eigen::Index(cols)};
    for (std::size_t r = 0; r < rows; ++r)
      vr(Eigen::Index(r)) = 0.5 + 0.5 * std::cos(two_pi * fr * double(r) / double(rows) + pr);
    for (std::size_t c = 0; c < cols; ++c)
      vc(Eigen::Index(c)) = 0.5 + 0.5 * std::cos(two_pi * fc * double(c) / double(cols) + pc);
    maps.push_back(vr * vc.transpose());
  }
  Matrix total = Matrix::Zero(Eigen::Index(rows), Eigen::Index(cols));
  for (const auto &m : maps)
    total += m;
  total.array() += 1e-3;

  Msi out;
  out.cube = Tensor3({rows, cols, bands});
  const double tr = 3.0 + 3.0 * u01(rng), tc = 3.0 + 3.0 * u01(rng), tp = two_pi * u01(rng);
  for (std::size_t b = 0; b < bands; ++b) {
    const double tw = 0.04 * std::cos(two_pi * double(b) / double(bands) + tp);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) {
        double v = 0.0;
        for (std::size_t m = 0; m < materials; ++m)
          v += maps[m](Eigen::Index(r), Eigen::Index(c)) * spectra(Eigen::Index(b), Eigen::Index(m));
        v /= total(Eigen::Index(r), Eigen::Index(c));
        v += 0.05 * std::sin(two_pi * tr * double(r) / double(rows)) *
                 std::sin(two_pi * tc * double(c) / double(cols)) +
             tw * std::cos(two_pi * (tr * double(r) + tc * double(c)) / double(rows + cols));
        out.cube(r, c, b) = std::clamp(v, 0.0, 1.0);
      }
  }
  return out;
}

} // namespace ltdl
