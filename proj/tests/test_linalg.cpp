#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <stdexcept>

#include "nclab/linalg.hpp"
#include "nclab/rng.hpp"

using nclab::Matrix;
using nclab::Rng;
using nclab::Vector;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

// naive triple-loop product, the independent reference for matmul
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (int k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      out(i, j) = sum;
    }
  }
  return out;
}

// singular values via an eigensolve of the Gram matrix, independent of the
// Jacobi implementation under test
Vector singular_values_oracle(const Matrix& a) {
  const Matrix gram = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  Vector eig = solver.eigenvalues();  // ascending
  Vector sv(eig.size());
  for (int i = 0; i < eig.size(); ++i) {
    sv(i) = std::sqrt(std::max(0.0, eig(eig.size() - 1 - i)));
  }
  return sv;
}

// random matrix with orthonormal columns, via Householder QR (not the code
// path under test)
Matrix random_orthonormal(int rows, int cols, Rng& rng) {
  const Matrix g = random_matrix(rows, cols, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  return q.leftCols(cols);
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Rng rng(1);
  const Matrix a = random_matrix(2, 2, rng);
  CHECK(((Matrix::Identity(2, 2) * a) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((nclab::matmul(Matrix::Identity(2, 2), a) - a).cwiseAbs().maxCoeff() == 0.0);

  Matrix b(2, 2);
  b << 1, 2, 3, 4;
  Matrix c(2, 1);
  c << 0, 1;
  const Matrix prod = nclab::matmul(b, c);
  CHECK(prod(0, 0) == 2.0);
  CHECK(prod(1, 0) == 4.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(2);
  const Matrix a = random_matrix(5, 7, rng);
  const Matrix b = random_matrix(7, 3, rng);
  const Matrix got = nclab::matmul(a, b);
  const Matrix want = matmul_oracle(a, b);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  const Matrix a = Matrix::Zero(3, 4);
  const Matrix b = Matrix::Zero(5, 2);
  CHECK_THROWS_WITH_AS(nclab::matmul(a, b), doctest::Contains("3x4"), std::invalid_argument);
}

TEST_CASE("thin_svd of a diagonal matrix") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 3.0;
  a(1, 1) = 2.0;
  const nclab::SvdResult svd = nclab::thin_svd(a);
  CHECK(svd.sigma(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(svd.sigma(1) == doctest::Approx(2.0).epsilon(1e-12));
  // w and v are signed permutations of the identity
  for (const Matrix& m : {svd.w, svd.v}) {
    for (int c = 0; c < 2; ++c) {
      CHECK(m.col(c).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(m.col(c).cwiseAbs().minCoeff() == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("thin_svd of the zero matrix uses the canonical completion") {
  const Matrix a = Matrix::Zero(3, 2);
  const nclab::SvdResult svd = nclab::thin_svd(a);
  CHECK(svd.sigma(0) == 0.0);
  CHECK(svd.sigma(1) == 0.0);
  CHECK(nclab::orthonormal_deviation(svd.w) < 1e-12);
  CHECK(nclab::orthonormal_deviation(svd.v) < 1e-12);
  // deterministic: identical call gives bit-identical output
  const nclab::SvdResult again = nclab::thin_svd(a);
  CHECK((svd.w.array() == again.w.array()).all());
  CHECK((svd.v.array() == again.v.array()).all());
}

TEST_CASE("thin_svd reconstructs and matches the Gram eigensolve oracle") {
  Rng rng(3);
  for (const auto [rows, cols] : {std::pair{4, 3}, {3, 4}, {8, 8}, {12, 5}}) {
    const Matrix a = random_matrix(rows, cols, rng);
    const nclab::SvdResult svd = nclab::thin_svd(a);
    const int s = std::min(rows, cols);
    REQUIRE(svd.sigma.size() == s);
    CHECK(nclab::orthonormal_deviation(svd.w) < 1e-10);
    CHECK(nclab::orthonormal_deviation(svd.v) < 1e-10);
    for (int i = 0; i + 1 < s; ++i) CHECK(svd.sigma(i) >= svd.sigma(i + 1));
    const Matrix rebuilt = svd.w * svd.sigma.asDiagonal() * svd.v.transpose();
    CHECK((rebuilt - a).norm() < 1e-8);
    const Vector oracle = singular_values_oracle(a);
    for (int i = 0; i < s; ++i) CHECK(svd.sigma(i) == doctest::Approx(oracle(i)).epsilon(1e-8));
  }
}

TEST_CASE("thin_svd reconstruction property over random sizes") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const int rows = 1 + static_cast<int>(rng.uniform_int(32));
    const int cols = 1 + static_cast<int>(rng.uniform_int(32));
    const Matrix a = random_matrix(rows, cols, rng);
    const nclab::SvdResult svd = nclab::thin_svd(a);
    const Matrix rebuilt = svd.w * svd.sigma.asDiagonal() * svd.v.transpose();
    CHECK((rebuilt - a).norm() / std::max(1.0, a.norm()) < 1e-8);
  }
}

TEST_CASE("thin_svd handles rank deficiency deterministically") {
  Rng rng(5);
  const Matrix base = random_matrix(6, 2, rng);
  Matrix a(6, 4);
  a << base, base;  // rank <= 2
  const nclab::SvdResult svd = nclab::thin_svd(a);
  CHECK(nclab::orthonormal_deviation(svd.w) < 1e-10);
  CHECK(svd.sigma(2) < 1e-10 * svd.sigma(0));
  const Matrix rebuilt = svd.w * svd.sigma.asDiagonal() * svd.v.transpose();
  CHECK((rebuilt - a).norm() / a.norm() < 1e-8);
}

TEST_CASE("thin_svd rejects non-finite input") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nclab::thin_svd(a), std::invalid_argument);
}

TEST_CASE("nearest_orthogonal fixed point and polar identity") {
  Rng rng(6);
  const Matrix q0 = random_orthonormal(5, 3, rng);
  CHECK((nclab::nearest_orthogonal(q0) - q0).norm() < 1e-9);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 0.5;
  CHECK((nclab::nearest_orthogonal(d) - Matrix::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("nearest_orthogonal beats random orthonormal candidates") {
  Rng rng(7);
  const Matrix a = random_matrix(3, 2, rng);
  const Matrix q = nclab::nearest_orthogonal(a);
  CHECK(nclab::orthonormal_deviation(q) < 1e-9);
  const double dist = (a - q).norm();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10000; ++i) {
    best = std::min(best, (a - random_orthonormal(3, 2, rng)).norm());
  }
  CHECK(dist <= best + 1e-9);
}

TEST_CASE("nearest_orthogonal is idempotent") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(6, 4, rng);
    const Matrix once = nclab::nearest_orthogonal(a);
    const Matrix twice = nclab::nearest_orthogonal(once);
    CHECK((once - twice).norm() < 1e-9);
  }
}

TEST_CASE("gram_schmidt_extend keeps e1 and adds an orthogonal column") {
  Rng rng(9);
  Matrix basis = Matrix::Zero(3, 1);
  basis(0, 0) = 1.0;
  const Matrix out = nclab::gram_schmidt_extend(basis, 1, rng);
  REQUIRE(out.cols() == 2);
  CHECK((out.col(0).array() == basis.col(0).array()).all());
  CHECK(nclab::orthonormal_deviation(out) < 1e-10);
}

TEST_CASE("gram_schmidt_extend builds a fresh basis from nothing") {
  Rng rng(10);
  const Matrix out = nclab::gram_schmidt_extend(Matrix(3, 0), 3, rng);
  REQUIRE(out.rows() == 3);
  REQUIRE(out.cols() == 3);
  CHECK(nclab::orthonormal_deviation(out) < 1e-10);
}

TEST_CASE("gram_schmidt_extend extends a random orthonormal basis") {
  Rng rng(11);
  const Matrix basis = random_orthonormal(8, 3, rng);
  const Matrix out = nclab::gram_schmidt_extend(basis, 2, rng);
  REQUIRE(out.cols() == 5);
  CHECK((out.leftCols(3).array() == basis.array()).all());
  CHECK(nclab::orthonormal_deviation(out) < 1e-10);
}

TEST_CASE("gram_schmidt_extend is deterministic per seed") {
  const Matrix basis = Matrix::Identity(6, 2);
  Rng a(42);
  Rng b(42);
  const Matrix out_a = nclab::gram_schmidt_extend(basis, 3, a);
  const Matrix out_b = nclab::gram_schmidt_extend(basis, 3, b);
  CHECK((out_a.array() == out_b.array()).all());
}

TEST_CASE("gram_schmidt_extend error paths") {
  Rng rng(12);
  CHECK_THROWS_WITH_AS(nclab::gram_schmidt_extend(Matrix::Identity(3, 2), 2, rng),
                       doctest::Contains("feature dimension too small"), std::invalid_argument);
  Matrix skewed(3, 2);
  skewed << 1, 1, 0, 1, 0, 0;  // not orthonormal
  CHECK_THROWS_AS(nclab::gram_schmidt_extend(skewed, 1, rng), std::invalid_argument);
}
