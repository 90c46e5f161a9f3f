#include "ltdl/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ltdl {

namespace {

void check_mode(int mode) {
  if (mode < 1 || mode > 3)
    throw std::invalid_argument("tensor mode must be 1, 2 or 3, got " + std::to_string(mode));
}

std::size_t product(const Dims3 &d) { return d[0] * d[1] * d[2]; }

void check_same_dims(const Tensor3 &a, const Tensor3 &b, const char *what) {
  if (a.dims() != b.dims())
    throw std::invalid_argument(std::string(what) + ": tensor dimensions differ");
}

} // namespace

Tensor3::Tensor3(Dims3 dims, double fill) : dims_(dims), data_(product(dims), fill) {}

Tensor3::Tensor3(Dims3 dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != product(dims_))
    throw std::invalid_argument("Tensor3: data length " + std::to_string(data_.size()) +
                                " does not match dims product " +
                                std::to_string(product(dims_)));
}

std::size_t Tensor3::dim(int mode) const {
  check_mode(mode);
  return dims_[mode - 1];
}

Tensor3 &Tensor3::operator+=(const Tensor3 &o) {
  check_same_dims(*this, o, "operator+=");
  flat() += o.flat();
  return *this;
}

Tensor3 &Tensor3::operator-=(const Tensor3 &o) {
  check_same_dims(*this, o, "operator-=");
  flat() -= o.flat();
  return *this;
}

Tensor3 &Tensor3::operator*=(double s) {
  flat() *= s;
  return *this;
}

bool Tensor3::all_finite() const { return flat().allFinite(); }

Tensor3 operator+(Tensor3 a, const Tensor3 &b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3 &b) { return a -= b; }
Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

Matrix unfold(const Tensor3 &t, int mode) {
  check_mode(mode);
  const auto [n1, n2, n3] = t.dims();
  switch (mode) {
  case 1:
    return t.mode1_view();
  case 2: {
    // columns indexed by i1 + n1*i3
    Matrix m(n2, n1 * n3);
    for (std::size_t k = 0; k < n3; ++k)
      m.middleCols(Eigen::Index(k * n1), Eigen::Index(n1)) = t.slice(k).transpose();
    return m;
  }
  default: {
    // columns indexed by i1 + n1*i2
    Matrix m(n3, n1 * n2);
    for (std::size_t k = 0; k < n3; ++k)
      m.row(Eigen::Index(k)) =
          Eigen::Map<const Eigen::RowVectorXd>(t.data().data() + k * n1 * n2, Eigen::Index(n1 * n2));
    return m;
  }
  }
}

Tensor3 fold(const Matrix &m, int mode, Dims3 dims) {
  check_mode(mode);
  const auto [n1, n2, n3] = dims;
  const std::size_t rows = dims[mode - 1];
  if (std::size_t(m.rows()) != rows || std::size_t(m.rows() * m.cols()) != product(dims))
    throw std::invalid_argument("fold: matrix shape " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + " inconsistent with mode " +
                                std::to_string(mode) + " and dims");
  Tensor3 t(dims);
  switch (mode) {
  case 1:
    t.mode1_view() = m;
    break;
  case 2:
    for (std::size_t k = 0; k < n3; ++k)
      t.slice(k) = m.middleCols(Eigen::Index(k * n1), Eigen::Index(n1)).transpose();
    break;
  default:
    for (std::size_t k = 0; k < n3; ++k)
      Eigen::Map<Eigen::RowVectorXd>(t.data().data() + k * n1 * n2, Eigen::Index(n1 * n2)) =
          m.row(Eigen::Index(k));
    break;
  }
  return t;
}

Tensor3 mode_product(const Tensor3 &t, const Matrix &u, int mode) {
  check_mode(mode);
  const auto [n1, n2, n3] = t.dims();
  if (std::size_t(u.cols()) != t.dims()[mode - 1])
    throw std::invalid_argument("mode_product: matrix has " + std::to_string(u.cols()) +
                                " columns but tensor mode " + std::to_string(mode) + " has size " +
                                std::to_string(t.dims()[mode - 1]));
  Dims3 out_dims = t.dims();
  out_dims[mode - 1] = std::size_t(u.rows());
  Tensor3 out(out_dims);
  if (out.empty())
    return out;
  switch (mode) {
  case 1:
    out.mode1_view().noalias() = u * t.mode1_view();
    break;
  case 2:
    for (std::size_t k = 0; k < n3; ++k)
      out.slice(k).noalias() = t.slice(k) * u.transpose();
    break;
  default: {
    const Eigen::Index plane = Eigen::Index(n1 * n2);
    Eigen::Map<const Matrix> in(t.data().data(), plane, Eigen::Index(n3));
    Eigen::Map<Matrix> res(out.data().data(), plane, u.rows());
    res.noalias() = in * u.transpose();
    break;
  }
  }
  return out;
}

Matrix kron(const Matrix &a, const Matrix &b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

double frobenius_norm(const Tensor3 &t) { return t.flat().norm(); }

double l1_norm(const Tensor3 &t) { return t.flat().lpNorm<1>(); }

double inner(const Tensor3 &a, const Tensor3 &b) {
  check_same_dims(a, b, "inner");
  return a.flat().dot(b.flat());
}

Norms norms(const Tensor3 &t) { return {frobenius_norm(t), l1_norm(t)}; }

} // namespace ltdl
