#pragma once

#include <string>

#include "ltdl/dictionary.hpp"
#include "ltdl/grouping.hpp"

namespace ltdl {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for data with peak 1.0, capped at 100 dB.
double psnr(const Msi &ref, const Msi &test);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-window SSIM per band over the valid region, averaged over bands.
/// Bands smaller than the window use whole-plane statistics.
double ssim(const Msi &ref, const Msi &test, const SsimOptions &opts = {});

struct SamResult {
  double angle = 0.0;           // mean spectral angle, radians
  std::size_t skipped = 0;      // pixels with a zero spectrum in either input
};
SamResult sam_detail(const Msi &ref, const Msi &test);
double sam(const Msi &ref, const Msi &test);

struct ErgasResult {
  double value = 0.0;
  std::size_t skipped_bands = 0; // reference bands with zero mean
};
ErgasResult ergas_detail(const Msi &ref, const Msi &test, double scale_ratio = 1.0);
double ergas(const Msi &ref, const Msi &test, double scale_ratio = 1.0);

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double sam = 0.0;
  double ergas = 0.0;
};

enum class AngleUnit { Radians, Degrees };

MetricReport evaluate(const Msi &ref, const Msi &test, AngleUnit unit = AngleUnit::Radians);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricReport &m);
std::string metrics_table(const MetricReport &m);

enum class AtomMatching { Greedy, Optimal };

struct RecoveryOptions {
  double threshold = 0.1;
  AtomMatching matching = AtomMatching::Greedy;
};

/// Fraction of atoms of kron(spectral, spatial) of `truth` matched by a
/// learned atom at distance 1 - |d^T dh| below the threshold. Each learned
/// atom is matched at most once.
double dictionary_recovery_ratio(const DictionaryPair &truth, const DictionaryPair &learned,
                                 const RecoveryOptions &opts = {});
double atom_recovery_ratio(const Matrix &truth, const Matrix &learned,
                           const RecoveryOptions &opts = {});

} // namespace ltdl
