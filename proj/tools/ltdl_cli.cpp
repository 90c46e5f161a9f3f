#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ltdl/io.hpp"
#include "ltdl/lowrank.hpp"
#include "ltdl/metrics.hpp"
#include "ltdl/solver.hpp"
#include "ltdl/synth.hpp"

namespace {

using namespace ltdl;

Msi load_msi(const std::string &path) { return Msi{load_cube(path)}; }

struct DenoiseArgs {
  std::string input, output, config, report, export_dir;
  std::optional<double> sigma;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
  bool show_config = false;
};

int run_denoise(const DenoiseArgs &a) {
  const std::filesystem::path file = a.config;
  LtdlConfig cfg = resolve_config(a.config.empty() ? nullptr : &file, a.overrides);
  if (a.sigma)
    cfg.noise_sigma = *a.sigma;
  cfg.validate();
  if (a.show_config) {
    std::cout << format_config(cfg);
    return 0;
  }

  const Msi noisy = load_msi(a.input);
  std::cout << "input " << a.input << " dims " << noisy.rows() << 'x' << noisy.cols() << 'x'
            << noisy.bands() << " seed " << cfg.seed << '\n';
  LtdlSolver::Callback cb;
  if (!a.quiet)
    cb = [](const LtdlSolver &, const IterationRecord &r) {
      std::cout << "iter " << r.iter << " objective " << std::setprecision(8) << r.objective
                << " residual " << std::setprecision(4) << r.residual << " rho " << r.rho << '\n';
    };
  const DenoiseResult res = denoise(noisy, cfg, cb);
  std::cout << "noise_sigma " << res.noise_sigma << " blocks " << res.num_blocks << " groups "
            << res.num_groups << " iterations " << res.report.iterations.size()
            << (res.report.converged ? " converged" : " not-converged") << '\n';
  for (const auto &w : res.report.warnings)
    std::cerr << "warning: " << w << '\n';

  save_tensor(res.output.cube, a.output);
  if (!a.report.empty())
    write_file_atomic(a.report, res.report.to_csv());
  if (!a.export_dir.empty())
    export_dictionaries(res.dict, cfg.win_rows, cfg.win_cols, a.export_dir);
  std::cout << "wrote " << a.output << '\n';
  return 0;
}

int run_addnoise(const std::string &in, double sigma, std::uint64_t seed, const std::string &out) {
  const Msi clean = load_msi(in);
  save_tensor(add_gaussian_noise(clean, sigma, seed).cube, out);
  std::cout << "sigma " << sigma << " seed " << seed << " wrote " << out << '\n';
  return 0;
}

int run_metrics(const std::string &ref, const std::string &test, const std::string &format,
                bool degrees) {
  const MetricReport m =
      evaluate(load_msi(ref), load_msi(test), degrees ? AngleUnit::Degrees : AngleUnit::Radians);
  if (format == "csv")
    std::cout << metrics_csv_header() << '\n' << metrics_csv_row(m) << '\n';
  else
    std::cout << metrics_table(m);
  return 0;
}

int run_synth(double sigma, int trials, int iters, std::uint64_t seed, bool optimal,
              const std::string &csv) {
  std::cout << "sigma " << sigma << " trials " << trials << " iters " << iters << " seed " << seed
            << '\n';
  std::vector<double> mean(std::size_t(iters), 0.0);
  for (int t = 0; t < trials; ++t) {
    SynthSpec spec;
    spec.noise = sigma;
    spec.seed = seed + std::uint64_t(t);
    const SynthData data = generate_synthetic(spec);
    RecoveryRunOptions opts;
    opts.iterations = iters;
    opts.params = synthetic_solver_params(sigma);
    opts.init_seed = seed + 1000 + std::uint64_t(t);
    opts.matching.matching = optimal ? AtomMatching::Optimal : AtomMatching::Greedy;
    const auto ratios = run_recovery_trial(data, opts);
    for (int i = 0; i < iters; ++i)
      mean[std::size_t(i)] += ratios[std::size_t(i)] / double(trials);
    std::cout << "trial " << t << " final " << ratios.back() << '\n';
  }
  std::ostringstream table;
  table << "iter,success_ratio\n";
  for (int i = 0; i < iters; ++i)
    table << i + 1 << ',' << mean[std::size_t(i)] << '\n';
  if (!csv.empty())
    write_file_atomic(csv, table.str());
  std::cout << table.str() << "final " << mean.back() << '\n';
  return 0;
}

int run_inspect(const std::string &in) {
  const Tensor3 t = load_cube(in);
  const auto d = t.dims();
  std::cout << "dims " << d[0] << 'x' << d[1] << 'x' << d[2] << '\n';
  if (!t.empty())
    std::cout << "range " << t.flat().minCoeff() << ' ' << t.flat().maxCoeff() << '\n';
  std::array<Vector, 3> sv;
  std::size_t longest = 0;
  for (int n = 0; n < 3; ++n) {
    sv[std::size_t(n)] = singular_values(unfold(t, n + 1));
    longest = std::max(longest, std::size_t(sv[std::size_t(n)].size()));
  }
  std::cout << "index,mode1,mode2,mode3\n" << std::setprecision(10);
  for (std::size_t i = 0; i < longest; ++i) {
    std::cout << i + 1;
    for (const auto &s : sv) {
      std::cout << ',';
      if (Eigen::Index(i) < s.size())
        std::cout << s(Eigen::Index(i));
    }
    std::cout << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"LTDL multispectral image denoiser"};
  app.require_subcommand(1);

  DenoiseArgs da;
  double sigma_opt = 0.0;
  auto *den = app.add_subcommand("denoise", "denoise a cube");
  den->add_option("--input", da.input, "noisy cube")->required();
  den->add_option("--output", da.output, "output container file")->required();
  auto *sigma_flag = den->add_option("--sigma", sigma_opt, "noise std (omit to estimate)");
  den->add_option("--config", da.config, "key=value config file");
  den->add_option("--report", da.report, "per-iteration CSV");
  den->add_option("--export-dicts", da.export_dir, "directory for learned dictionaries");
  den->add_flag("--quiet", da.quiet, "no per-iteration output");
  den->add_flag("--show-config", da.show_config, "print the resolved configuration and exit");
  std::map<std::string, std::string> flag_values;
  for (const auto &key : ltdl::config_keys())
    den->add_option("--" + key, flag_values[key], "override config " + key);

  std::string in, out, ref, test, format = "table", csv;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  int trials = 20, iters = 200;
  bool degrees = false, optimal = false;

  auto *an = app.add_subcommand("addnoise", "add i.i.d. Gaussian noise");
  an->add_option("--input", in)->required();
  an->add_option("--sigma", sigma)->required();
  an->add_option("--seed", seed);
  an->add_option("--output", out)->required();

  auto *me = app.add_subcommand("metrics", "PSNR, SSIM, SAM, ERGAS");
  me->add_option("--ref", ref)->required();
  me->add_option("--test", test)->required();
  me->add_option("--format", format)->check(CLI::IsMember({"csv", "table"}));
  me->add_flag("--degrees", degrees, "report SAM in degrees");

  auto *sy = app.add_subcommand("synth", "synthetic dictionary recovery");
  sy->add_option("--sigma", sigma)->required();
  sy->add_option("--trials", trials)->check(CLI::PositiveNumber);
  sy->add_option("--iters", iters)->check(CLI::PositiveNumber);
  sy->add_option("--seed", seed);
  sy->add_flag("--optimal", optimal, "optimal instead of greedy atom matching");
  sy->add_option("--csv", csv, "write the ratio table here");

  std::size_t rows = 64, cols = 64, bands = 16;
  auto *sc = app.add_subcommand("scene", "write a synthetic test cube in [0,1]");
  sc->add_option("--rows", rows)->check(CLI::PositiveNumber);
  sc->add_option("--cols", cols)->check(CLI::PositiveNumber);
  sc->add_option("--bands", bands)->check(CLI::PositiveNumber);
  sc->add_option("--seed", seed);
  sc->add_option("--output", out)->required();

  auto *ins = app.add_subcommand("inspect", "dims, range and per-mode singular values");
  ins->add_option("--input", in)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (*den) {
      if (*sigma_flag)
        da.sigma = sigma_opt;
      for (const auto &[k, v] : flag_values)
        if (den->count("--" + k))
          da.overrides[k] = v;
      return run_denoise(da);
    }
    if (*an)
      return run_addnoise(in, sigma, seed, out);
    if (*me)
      return run_metrics(ref, test, format, degrees);
    if (*sy)
      return run_synth(sigma, trials, iters, seed, optimal, csv);
    if (*ins)
      return run_inspect(in);
    if (*sc) {
      save_tensor(synthetic_cube(rows, cols, bands, seed).cube, out);
      std::cout << "seed " << seed << " wrote " << out << '\n';
      return 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
