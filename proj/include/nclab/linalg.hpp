#pragma once

#include <Eigen/Dense>

#include "nclab/rng.hpp"

namespace nclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD a = w * sigma.asDiagonal() * v^T with s = min(rows, cols).
/// Columns of w and v are orthonormal; sigma is nonnegative and nonincreasing.
struct SvdResult {
  Matrix w;
  Vector sigma;
  Matrix v;
};

/// Throws std::invalid_argument naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& a, const char* what);

/// max |a^T a - I|, the orthonormality defect of a's columns.
double orthonormal_deviation(const Matrix& a);

/// Checked matrix product. Shape mismatch throws with both shapes named.
Matrix matmul(const Matrix& a, const Matrix& b);

/// One-sided Jacobi thin SVD. Converges for these sizes in a handful of
/// sweeps; throws after 100 sweeps without convergence (carrying the count).
/// Left/right columns belonging to (near-)zero singular values are completed
/// deterministically by a Gram-Schmidt sweep over the canonical basis, so the
/// result is a pure function of the input.
SvdResult thin_svd(const Matrix& a);

/// Nearest matrix with orthonormal columns in Frobenius norm: w * v^T from the
/// thin SVD. Requires rows >= cols.
Matrix nearest_orthogonal(const Matrix& a);

/// Appends `count` new orthonormal columns to `basis` (d x k, orthonormal to
/// 1e-8, k + count <= d). Candidates are standard Gaussian draws from `rng`,
/// orthogonalized by modified Gram-Schmidt applied twice; draws whose residual
/// norm falls below 1e-6 are rejected, with an error after 100 redraws.
/// The first k columns of the result are bit-identical to `basis`.
Matrix gram_schmidt_extend(const Matrix& basis, int count, Rng& rng);

}  // namespace nclab
