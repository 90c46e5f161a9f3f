#include "ltdl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ltdl {

namespace {

void check_dims(const Msi &a, const Msi &b, const char *what) {
  if (a.cube.dims() != b.cube.dims())
    throw std::invalid_argument(std::string(what) + ": inputs have different dimensions");
  if (a.cube.empty())
    throw std::invalid_argument(std::string(what) + ": empty input");
}

// Separable "valid" filtering of an image plane with a 1-D kernel.
Matrix filter_valid(const Matrix &img, const Vector &k) {
  const Eigen::Index w = k.size();
  const Eigen::Index r = img.rows() - w + 1, c = img.cols() - w + 1;
  Matrix tmp(r, img.cols());
  for (Eigen::Index j = 0; j < img.cols(); ++j)
    for (Eigen::Index i = 0; i < r; ++i)
      tmp(i, j) = img.col(j).segment(i, w).dot(k);
  Matrix out(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    out.col(j) = tmp.middleCols(j, w) * k;
  return out;
}

double ssim_plane(const Matrix &x, const Matrix &y, const SsimOptions &o) {
  const double c1 = std::pow(o.k1 * o.dynamic_range, 2);
  const double c2 = std::pow(o.k2 * o.dynamic_range, 2);
  auto index = [&](double mx, double my, double sxx, double syy, double sxy) {
    return ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
           ((mx * mx + my * my + c1) * (sxx + syy + c2));
  };
  if (x.rows() < o.window || x.cols() < o.window) {
    const double n = double(x.size());
    const double mx = x.sum() / n, my = y.sum() / n;
    const double sxx = x.cwiseProduct(x).sum() / n - mx * mx;
    const double syy = y.cwiseProduct(y).sum() / n - my * my;
    const double sxy = x.cwiseProduct(y).sum() / n - mx * my;
    return index(mx, my, sxx, syy, sxy);
  }
  Vector k(o.window);
  const double half = 0.5 * (o.window - 1);
  for (int i = 0; i < o.window; ++i)
    k(i) = std::exp(-0.5 * std::pow((i - half) / o.sigma, 2));
  k /= k.sum();
  const Matrix mx = filter_valid(x, k), my = filter_valid(y, k);
  const Matrix exx = filter_valid(x.cwiseProduct(x), k);
  const Matrix eyy = filter_valid(y.cwiseProduct(y), k);
  const Matrix exy = filter_valid(x.cwiseProduct(y), k);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < mx.cols(); ++j)
    for (Eigen::Index i = 0; i < mx.rows(); ++i) {
      const double a = mx(i, j), b = my(i, j);
      acc += index(a, b, exx(i, j) - a * a, eyy(i, j) - b * b, exy(i, j) - a * b);
    }
  return acc / double(mx.size());
}

} // namespace

double psnr(const Msi &ref, const Msi &test) {
  check_dims(ref, test, "psnr");
  const double mse = (ref.cube.flat() - test.cube.flat()).squaredNorm() / double(ref.cube.size());
  if (mse <= 0.0)
    return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Msi &ref, const Msi &test, const SsimOptions &opts) {
  check_dims(ref, test, "ssim");
  double acc = 0.0;
  for (std::size_t b = 0; b < ref.bands(); ++b)
    acc += ssim_plane(ref.cube.slice(b), test.cube.slice(b), opts);
  return acc / double(ref.bands());
}

SamResult sam_detail(const Msi &ref, const Msi &test) {
  check_dims(ref, test, "sam");
  const std::size_t nr = ref.rows(), nc = ref.cols(), nb = ref.bands();
  SamResult out;
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t r = 0; r < nr; ++r) {
      double xy = 0.0, xx = 0.0, yy = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        const double x = ref.cube(r, c, b), y = test.cube(r, c, b);
        xy += x * y;
        xx += x * x;
        yy += y * y;
      }
      if (xx == 0.0 || yy == 0.0) {
        ++out.skipped;
        continue;
      }
      acc += std::acos(std::clamp(xy / std::sqrt(xx * yy), -1.0, 1.0));
      ++counted;
    }
  out.angle = counted > 0 ? acc / double(counted) : 0.0;
  return out;
}

double sam(const Msi &ref, const Msi &test) { return sam_detail(ref, test).angle; }

ErgasResult ergas_detail(const Msi &ref, const Msi &test, double scale_ratio) {
  check_dims(ref, test, "ergas");
  const double n = double(ref.rows() * ref.cols());
  ErgasResult out;
  double acc = 0.0;
  for (std::size_t b = 0; b < ref.bands(); ++b) {
    const auto x = ref.cube.slice(b);
    const auto y = test.cube.slice(b);
    const double mean = x.sum() / n;
    if (mean == 0.0) {
      ++out.skipped_bands;
      continue;
    }
    const double mse = (x - y).squaredNorm() / n;
    acc += mse / (mean * mean);
  }
  const std::size_t used = ref.bands() - out.skipped_bands;
  out.value = used > 0 ? 100.0 * scale_ratio * std::sqrt(acc / double(used)) : 0.0;
  return out;
}

double ergas(const Msi &ref, const Msi &test, double scale_ratio) {
  return ergas_detail(ref, test, scale_ratio).value;
}

MetricReport evaluate(const Msi &ref, const Msi &test, AngleUnit unit) {
  MetricReport m;
  m.psnr = psnr(ref, test);
  m.ssim = ssim(ref, test);
  m.sam = sam(ref, test);
  if (unit == AngleUnit::Degrees)
    m.sam *= 180.0 / std::numbers::pi;
  m.ergas = ergas(ref, test);
  return m;
}

std::string metrics_csv_header() { return "psnr,ssim,sam,ergas"; }

std::string metrics_csv_row(const MetricReport &m) {
  std::ostringstream os;
  os << std::setprecision(10) << m.psnr << ',' << m.ssim << ',' << m.sam << ',' << m.ergas;
  return os.str();
}

std::string metrics_table(const MetricReport &m) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << std::setw(10) << "SAM"
     << "ERGAS" << '\n'
     << std::fixed << std::setprecision(2) << std::setw(10) << m.psnr << std::setw(10) << m.ssim
     << std::setw(10) << m.sam << m.ergas << '\n';
  return os.str();
}

namespace {

// Minimum-cost assignment of every row to a distinct column (rows <= cols).
std::vector<int> hungarian(const Matrix &cost) {
  const int n = int(cost.rows()), m = int(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<bool> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j])
          continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0)
      match[p[j] - 1] = j - 1;
  return match;
}

} // namespace

double atom_recovery_ratio(const Matrix &truth, const Matrix &learned,
                           const RecoveryOptions &opts) {
  if (truth.rows() != learned.rows())
    throw std::invalid_argument("atom_recovery_ratio: atom dimensions differ");
  if (truth.cols() == 0)
    throw std::invalid_argument("atom_recovery_ratio: no reference atoms");
  const Matrix dist = (1.0 - (truth.transpose() * learned).array().abs()).matrix();
  const Eigen::Index nt = dist.rows(), nl = dist.cols();
  std::vector<double> best(std::size_t(nt), std::numeric_limits<double>::infinity());

  if (opts.matching == AtomMatching::Optimal) {
    // Every miss costs more than any total distance, so the assignment
    // maximises the number of hits first and the closeness second.
    const double miss = double(std::max(nt, nl)) + 1.0;
    Matrix cost = dist;
    for (Eigen::Index i = 0; i < cost.size(); ++i)
      if (!(cost.data()[i] < opts.threshold))
        cost.data()[i] += miss;
    if (nt <= nl) {
      const auto match = hungarian(cost);
      for (Eigen::Index i = 0; i < nt; ++i)
        if (match[std::size_t(i)] >= 0)
          best[std::size_t(i)] = dist(i, match[std::size_t(i)]);
    } else {
      const Matrix costt = cost.transpose();
      const auto match = hungarian(costt);
      for (Eigen::Index l = 0; l < nl; ++l)
        if (match[std::size_t(l)] >= 0)
          best[std::size_t(match[std::size_t(l)])] = dist(match[std::size_t(l)], l);
    }
  } else {
    struct Pair {
      double d;
      Eigen::Index t, l;
    };
    std::vector<Pair> pairs;
    pairs.reserve(std::size_t(nt * nl));
    for (Eigen::Index l = 0; l < nl; ++l)
      for (Eigen::Index t = 0; t < nt; ++t)
        pairs.push_back({dist(t, l), t, l});
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair &a, const Pair &b) { return a.d < b.d; });
    std::vector<bool> tused(std::size_t(nt), false), lused(std::size_t(nl), false);
    for (const auto &p : pairs) {
      if (tused[std::size_t(p.t)] || lused[std::size_t(p.l)])
        continue;
      tused[std::size_t(p.t)] = lused[std::size_t(p.l)] = true;
      best[std::size_t(p.t)] = p.d;
    }
  }
  std::size_t hits = 0;
  for (double d : best)
    if (d < opts.threshold)
      ++hits;
  return double(hits) / double(nt);
}

double dictionary_recovery_ratio(const DictionaryPair &truth, const DictionaryPair &learned,
                                 const RecoveryOptions &opts) {
  if (truth.spatial.rows() != learned.spatial.rows() ||
      truth.spectral.rows() != learned.spectral.rows())
    throw std::invalid_argument("dictionary_recovery_ratio: dictionary shapes differ");
  return atom_recovery_ratio(truth.equivalent(), learned.equivalent(), opts);
}

} // namespace ltdl
