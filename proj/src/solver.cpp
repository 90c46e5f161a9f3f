#include "ltdl/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ltdl {

namespace {

Dims3 code_dims(const Tensor3 &x, const DictionaryPair &dict) {
  return {std::size_t(dict.spatial.cols()), std::size_t(dict.spectral.cols()), x.dims()[2]};
}

void check_group(const GroupState &s, const DictionaryPair &dict) {
  if (std::size_t(dict.spatial.rows()) != s.x.dims()[0] ||
      std::size_t(dict.spectral.rows()) != s.x.dims()[1])
    throw std::invalid_argument("group dimensions do not match the dictionaries");
  if (s.z.dims() != code_dims(s.x, dict) || s.c.dims() != s.z.dims() || s.y.dims() != s.z.dims())
    throw std::invalid_argument("code tensors have inconsistent dimensions");
  if (s.t.dims() != s.x.dims())
    throw std::invalid_argument("low-rank target has inconsistent dimensions");
}

} // namespace

GroupState make_group_state(Tensor3 x, const RankTriple &ranks, const DictionaryPair &dict) {
  GroupState s;
  const Dims3 zd = code_dims(x, dict);
  s.z = Tensor3(zd);
  s.c = Tensor3(zd);
  s.y = Tensor3(zd);
  s.t = Tensor3(x.dims());
  s.x = std::move(x);
  validate_ranks(s.x, ranks);
  s.ranks = ranks;
  check_group(s, dict);
  return s;
}

void SolverParams::validate() const {
  if (!(lambda_s >= 0.0) || !(lambda_r >= 0.0))
    throw std::invalid_argument("lambda_s and lambda_r must be non-negative");
  if (!(rho0 > 0.0))
    throw std::invalid_argument("rho0 must be positive");
  if (!(mu > 1.0))
    throw std::invalid_argument("mu must be greater than 1");
  if (!(rho_max >= rho0))
    throw std::invalid_argument("rho_max must be >= rho0");
  if (max_outer_iters < 1)
    throw std::invalid_argument("max_outer_iters must be >= 1");
}

CodeSystem::CodeSystem(const DictionaryPair &dict, double gram_weight, double rho)
    : weight_(gram_weight), rho_(rho) {
  if (!(rho > 0.0))
    throw std::invalid_argument("CodeSystem: rho must be positive");
  Eigen::SelfAdjointEigenSolver<Matrix> ea(dict.spatial.transpose() * dict.spatial);
  Eigen::SelfAdjointEigenSolver<Matrix> ee(dict.spectral.transpose() * dict.spectral);
  va_ = ea.eigenvectors();
  la_ = ea.eigenvalues().cwiseMax(0.0);
  ve_ = ee.eigenvectors();
  le_ = ee.eigenvalues().cwiseMax(0.0);
}

Tensor3 CodeSystem::solve(const Tensor3 &rhs) const {
  if (std::size_t(va_.rows()) != rhs.dims()[0] || std::size_t(ve_.rows()) != rhs.dims()[1])
    throw std::invalid_argument("CodeSystem::solve: rhs dimensions do not match");
  Matrix denom = weight_ * (la_ * le_.transpose());
  denom.array() += rho_;
  Tensor3 out(rhs.dims());
  Matrix w;
  for (std::size_t k = 0; k < rhs.dims()[2]; ++k) {
    w.noalias() = va_.transpose() * rhs.slice(k) * ve_;
    w.array() /= denom.array();
    out.slice(k).noalias() = va_ * w * ve_.transpose();
  }
  return out;
}

double CodeSystem::condition_number() const {
  const double hi = weight_ * la_.maxCoeff() * le_.maxCoeff() + rho_;
  const double lo = weight_ * la_.minCoeff() * le_.minCoeff() + rho_;
  return hi / lo;
}

Tensor3 reconstruct(const Tensor3 &z, const DictionaryPair &dict) {
  return mode_product(mode_product(z, dict.spatial, 1), dict.spectral, 2);
}

Tensor3 update_t(const GroupState &s, const DictionaryPair &dict, const HooiOptions &opts) {
  const Tensor3 rec = reconstruct(s.z, dict);
  Tensor3 cand = lowrank_approx(rec, s.ranks, opts);
  if (!s.t.empty() && s.t.dims() == rec.dims() &&
      (rec.flat() - s.t.flat()).squaredNorm() < (rec.flat() - cand.flat()).squaredNorm())
    return s.t;
  return cand;
}

Tensor3 update_z(const GroupState &s, const DictionaryPair &dict, const CodeSystem &sys,
                 double lambda_r) {
  Tensor3 target = s.x;
  if (!s.t.empty())
    target.flat() = 2.0 * s.x.flat() + 2.0 * lambda_r * s.t.flat();
  else
    target.flat() *= 2.0;
  Tensor3 rhs = mode_product(mode_product(target, dict.spatial.transpose(), 1),
                             dict.spectral.transpose(), 2);
  rhs.flat() += sys.rho() * s.c.flat() + s.y.flat();
  return sys.solve(rhs);
}

Tensor3 update_z(const GroupState &s, const DictionaryPair &dict, double rho, double lambda_r) {
  return update_z(s, dict, CodeSystem(dict, 2.0 + 2.0 * lambda_r, rho), lambda_r);
}

Tensor3 ridge_code_fit(const Tensor3 &x, const DictionaryPair &dict, double rho) {
  const CodeSystem sys(dict, 2.0, rho);
  Tensor3 rhs = mode_product(mode_product(x, dict.spatial.transpose(), 1),
                             dict.spectral.transpose(), 2);
  rhs *= 2.0;
  return sys.solve(rhs);
}

double soft_threshold(double m, double tau) {
  const double a = std::abs(m) - tau;
  if (a <= 0.0)
    return 0.0;
  return m > 0.0 ? a : -a;
}

Tensor3 soft_threshold(const Tensor3 &t, double tau) {
  if (!(tau >= 0.0))
    throw std::invalid_argument("soft_threshold: tau must be non-negative");
  Tensor3 out = t;
  for (double &v : out.data())
    v = soft_threshold(v, tau);
  return out;
}

Tensor3 update_c(const GroupState &s, double rho, double lambda_s) {
  Tensor3 m = s.z;
  m.flat() -= s.y.flat() / rho;
  return soft_threshold(m, lambda_s / rho);
}

Tensor3 update_y(const GroupState &s, double rho) {
  Tensor3 y = s.y;
  y.flat() += rho * (s.c.flat() - s.z.flat());
  return y;
}

double objective(std::span<const GroupState> states, const DictionaryPair &dict, double lambda_s,
                 double lambda_r) {
  double total = 0.0;
  for (const auto &s : states) {
    const Tensor3 rec = reconstruct(s.z, dict);
    total += (s.x.flat() - rec.flat()).squaredNorm() + lambda_s * l1_norm(s.z) +
             lambda_r * (rec.flat() - s.t.flat()).squaredNorm();
  }
  return total;
}

double augmented_lagrangian(const GroupState &s, const DictionaryPair &dict, double lambda_s,
                            double lambda_r, double rho) {
  const Tensor3 rec = reconstruct(s.z, dict);
  const Eigen::VectorXd diff = s.c.flat() - s.z.flat();
  return (s.x.flat() - rec.flat()).squaredNorm() + lambda_s * l1_norm(s.c) +
         diff.dot(s.y.flat()) + 0.5 * rho * diff.squaredNorm() +
         lambda_r * (rec.flat() - s.t.flat()).squaredNorm();
}

std::string SolverReport::to_csv() const {
  std::ostringstream os;
  os << "iter,objective,residual,dz,dxhat,rho,seconds\n";
  os << std::setprecision(10);
  for (const auto &r : iterations)
    os << r.iter << ',' << r.objective << ',' << r.residual << ',' << r.dz << ',' << r.dxhat << ','
       << r.rho << ',' << r.seconds << '\n';
  return os.str();
}

std::string SolverReport::to_log() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(4);
  for (const auto &r : iterations)
    os << "iter " << r.iter << " objective " << r.objective << " residual " << r.residual
       << " |C-Z| " << r.residual_abs << " dz " << r.dz << " dxhat " << r.dxhat << " dict "
       << r.dict_objective << " rho " << r.rho << " t " << std::fixed << std::setprecision(3)
       << r.seconds << "s" << std::scientific << std::setprecision(4) << '\n';
  os << (converged ? "converged" : "stopped at iteration limit") << '\n';
  for (const auto &w : warnings)
    os << "warning: " << w << '\n';
  return os.str();
}

LtdlSolver::LtdlSolver(std::vector<GroupState> states, DictionaryPair dict, SolverParams params)
    : states_(std::move(states)), dict_(std::move(dict)), params_(params), rho_(params.rho0) {
  params_.validate();
  if (states_.empty())
    throw std::invalid_argument("LtdlSolver: no groups");
  for (auto &s : states_) {
    check_group(s, dict_);
    if (params_.warm_start && s.z.flat().isZero(0.0))
      s.z = ridge_code_fit(s.x, dict_, params_.rho0);
  }
}

std::vector<Tensor3> LtdlSolver::reconstructions() const {
  std::vector<Tensor3> out;
  out.reserve(states_.size());
  for (const auto &s : states_)
    out.push_back(reconstruct(s.z, dict_));
  return out;
}

IterationRecord LtdlSolver::step() {
  const auto t0 = std::chrono::steady_clock::now();
  ++iter_;
  IterationRecord rec;
  rec.iter = iter_;
  rec.rho = rho_;

  const std::vector<Tensor3> prev_rec = reconstructions();
  const CodeSystem sys(dict_, 2.0 + 2.0 * params_.lambda_r, rho_);
  const auto n = static_cast<std::ptrdiff_t>(states_.size());
  std::vector<double> dz(states_.size()), res_abs(states_.size()), res_rel(states_.size());
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      GroupState &s = states_[std::size_t(k)];
      s.t = update_t(s, dict_, params_.hooi);
      Tensor3 z = update_z(s, dict_, sys, params_.lambda_r);
      dz[std::size_t(k)] = (z.flat() - s.z.flat()).norm();
      s.z = std::move(z);
      s.c = update_c(s, rho_, params_.lambda_s);
      const double r = (s.c.flat() - s.z.flat()).norm();
      const double zn = s.z.flat().norm();
      res_abs[std::size_t(k)] = r;
      res_rel[std::size_t(k)] = zn > 0.0 ? r / zn : r;
      if (!s.z.all_finite() || !s.c.all_finite() || !s.t.all_finite())
        throw std::runtime_error("non-finite values in group " + std::to_string(k) +
                                 " at iteration " + std::to_string(iter_));
    } catch (...) {
#pragma omp critical
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);

  if (params_.update_dictionaries) {
    std::vector<Tensor3> targets, codes;
    targets.reserve(states_.size());
    codes.reserve(states_.size());
    for (const auto &s : states_) {
      targets.push_back(blended_target(s.x, s.t, params_.lambda_r));
      codes.push_back(s.z);
    }
    auto ua = update_spatial_dictionary(targets, codes, dict_, params_.dict);
    if (!ua.converged)
      report_.warnings.push_back("iteration " + std::to_string(iter_) +
                                 ": spatial dictionary dual did not converge");
    dict_.spatial = std::move(ua.d);
    auto ue = update_spectral_dictionary(targets, codes, dict_, params_.dict);
    if (!ue.converged)
      report_.warnings.push_back("iteration " + std::to_string(iter_) +
                                 ": spectral dictionary dual did not converge");
    dict_.spectral = std::move(ue.d);
    rec.dict_objective = ue.objective;
    if (!dict_.spatial.allFinite() || !dict_.spectral.allFinite())
      throw std::runtime_error("non-finite dictionary at iteration " + std::to_string(iter_));
  }

  for (auto &s : states_)
    s.y = update_y(s, rho_);

  double dx = 0.0;
  for (std::size_t k = 0; k < states_.size(); ++k) {
    const Tensor3 r = reconstruct(states_[k].z, dict_);
    dx = std::max(dx, (r.flat() - prev_rec[k].flat()).norm());
  }
  rec.dxhat = dx;
  rec.dz = *std::max_element(dz.begin(), dz.end());
  rec.residual_abs = *std::max_element(res_abs.begin(), res_abs.end());
  rec.residual = *std::max_element(res_rel.begin(), res_rel.end());
  rec.objective = objective(states_, dict_, params_.lambda_s, params_.lambda_r);
  if (!std::isfinite(rec.objective))
    throw std::runtime_error("non-finite objective at iteration " + std::to_string(iter_));

  rho_ = std::min(params_.mu * rho_, params_.rho_max);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report_.iterations.push_back(rec);
  return rec;
}

const SolverReport &LtdlSolver::run(const Callback &cb) {
  while (iter_ < params_.max_outer_iters) {
    const IterationRecord rec = step();
    if (cb)
      cb(*this, rec);
    if (rec.residual < params_.tol_residual) {
      report_.converged = true;
      break;
    }
  }
  return report_;
}

SolverParams LtdlConfig::solver_params(double nu) const {
  SolverParams p;
  p.lambda_s = effective_lambda_s(nu);
  p.lambda_r = effective_lambda_r(nu);
  p.rho0 = rho0;
  p.mu = mu;
  p.rho_max = rho_max;
  p.max_outer_iters = max_outer_iters;
  p.tol_residual = tol_residual;
  p.update_dictionaries = update_dictionaries;
  p.hooi.max_iter = hooi_iters;
  p.hooi.tol = hooi_tol;
  p.dict.newton_iters = newton_iters;
  return p;
}

void LtdlConfig::validate() const {
  if (win_rows == 0 || win_cols == 0 || step_rows == 0 || step_cols == 0)
    throw std::invalid_argument("window and step sizes must be positive");
  if (!(tau_a >= 1.0) || !(tau_e >= 1.0))
    throw std::invalid_argument("redundancy ratios must be >= 1");
  if (!(energy_frac > 0.0 && energy_frac <= 1.0))
    throw std::invalid_argument("energy_frac must lie in (0, 1]");
  if (kmeans_iters < 1 || hooi_iters < 1 || newton_iters < 1)
    throw std::invalid_argument("iteration counts must be >= 1");
  solver_params(std::max(noise_sigma, 0.0)).validate();
}

double estimate_noise_sigma(const Msi &msi) {
  const auto [nr, nc, nb] = msi.cube.dims();
  if (nr < 3 || nc < 3)
    throw std::invalid_argument("estimate_noise_sigma: image must be at least 3x3");
  // 4-neighbour Laplacian: white noise of std s gives a response of std s*sqrt(20).
  const double gain = std::sqrt(20.0);
  double acc = 0.0;
  std::vector<double> resp;
  resp.reserve((nr - 2) * (nc - 2));
  for (std::size_t b = 0; b < nb; ++b) {
    resp.clear();
    for (std::size_t c = 1; c + 1 < nc; ++c)
      for (std::size_t r = 1; r + 1 < nr; ++r)
        resp.push_back(msi.cube(r - 1, c, b) + msi.cube(r + 1, c, b) + msi.cube(r, c - 1, b) +
                       msi.cube(r, c + 1, b) - 4.0 * msi.cube(r, c, b));
    auto median = [](std::vector<double> v) {
      const auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
      std::nth_element(v.begin(), mid, v.end());
      return *mid;
    };
    const double med = median(resp);
    for (double &v : resp)
      v = std::abs(v - med);
    acc += 1.4826 * median(resp) / gain;
  }
  return acc / double(nb);
}

DenoiseResult denoise(const Msi &msi, const LtdlConfig &cfg, const LtdlSolver::Callback &cb) {
  cfg.validate();
  DenoiseResult out;
  out.noise_sigma = cfg.noise_sigma >= 0.0 ? cfg.noise_sigma : estimate_noise_sigma(msi);

  const BlockGrid grid = extract_blocks(msi, cfg.win_rows, cfg.win_cols, cfg.step_rows, cfg.step_cols);
  const std::size_t k = cfg.k_clusters > 0 ? std::min(cfg.k_clusters, grid.size())
                                           : default_cluster_count(grid.size());
  const auto labels = cluster_blocks(grid, k, {cfg.seed, cfg.kmeans_iters});
  std::vector<TensorGroup> groups = form_groups(grid, labels);
  out.num_blocks = grid.size();
  out.num_groups = groups.size();

  DictionaryPair dict = init_dictionaries(groups, cfg.tau_a, cfg.tau_e, cfg.seed);
  std::vector<GroupState> states;
  states.reserve(groups.size());
  for (const auto &g : groups)
    states.push_back(
        make_group_state(g.x, estimate_ranks(g.x, out.noise_sigma, cfg.energy_frac), dict));

  LtdlSolver solver(std::move(states), std::move(dict), cfg.solver_params(out.noise_sigma));
  out.report = solver.run(cb);

  auto recs = solver.reconstructions();
  for (std::size_t i = 0; i < groups.size(); ++i)
    groups[i].x = std::move(recs[i]);
  out.output = aggregate(groups, grid);
  out.dict = solver.dictionaries();
  return out;
}

} // namespace ltdl
