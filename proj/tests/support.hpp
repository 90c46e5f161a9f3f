#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ltdl/tensor.hpp"

namespace testing_support {

inline ltdl::Tensor3 random_tensor(ltdl::Dims3 dims, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  ltdl::Tensor3 t(dims);
  for (double &v : t.data())
    v = scale * n01(rng);
  return t;
}

inline ltdl::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  ltdl::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = n01(rng);
  return m;
}

inline ltdl::Matrix random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Eigen::HouseholderQR<ltdl::Matrix> qr(random_matrix(rows, cols, seed));
  return qr.householderQ() * ltdl::Matrix::Identity(rows, cols);
}

inline double rel_diff(const ltdl::Tensor3 &a, const ltdl::Tensor3 &b) {
  const double den = std::max(a.flat().norm(), 1e-300);
  return (a.flat() - b.flat()).norm() / den;
}

inline double rel_diff(const ltdl::Matrix &a, const ltdl::Matrix &b) {
  return (a - b).norm() / std::max(a.norm(), 1e-300);
}

} // namespace testing_support
