#include "nclab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nclab {
namespace {

constexpr double kJacobiTol = 1e-12;  // relative off-diagonal threshold
constexpr int kMaxSweeps = 100;
constexpr double kRankTol = 1e-12;  // sigma below kRankTol * sigma_max counts as zero

std::string shape_of(const Matrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

// Fills columns [resolved, q.cols()) with unit vectors orthogonal to the ones
// already present, sweeping the canonical basis e1, e2, ... in order. A single
// sweep always suffices: the squared residual mass of the canonical vectors
// against a rank-r subspace is d - r, so some candidate clears the threshold.
void complete_columns(Matrix& q, int resolved) {
  const int d = static_cast<int>(q.rows());
  const int n = static_cast<int>(q.cols());
  const double threshold = 0.5 / std::sqrt(static_cast<double>(d));
  int next = resolved;
  for (int c = 0; c < d && next < n; ++c) {
    Vector cand = Vector::Zero(d);
    cand(c) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < next; ++j) cand -= q.col(j).dot(cand) * q.col(j);
    }
    const double nrm = cand.norm();
    if (nrm >= threshold) q.col(next++) = cand / nrm;
  }
  if (next < n) throw std::runtime_error("thin_svd: failed to complete orthonormal columns");
}

}  // namespace

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries in " + shape_of(a) +
                                " matrix");
  }
}

double orthonormal_deviation(const Matrix& a) {
  const Matrix gram = a.transpose() * a;
  return (gram - Matrix::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch (" + shape_of(a) + " times " +
                                shape_of(b) + ")");
  }
  return a * b;
}

SvdResult thin_svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw std::invalid_argument("thin_svd: empty matrix " + shape_of(a));
  }
  require_finite(a, "thin_svd");

  const bool transposed = a.rows() < a.cols();
  Matrix b = transposed ? Matrix(a.transpose()) : a;
  const int m = static_cast<int>(b.rows());
  const int n = static_cast<int>(b.cols());

  // Hestenes one-sided Jacobi: rotate column pairs until mutually orthogonal.
  Matrix v = Matrix::Identity(n, n);
  int sweeps = 0;
  bool converged = (n < 2);
  while (!converged && sweeps < kMaxSweeps) {
    ++sweeps;
    int rotations = 0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double alpha = b.col(p).squaredNorm();
        const double beta = b.col(q).squaredNorm();
        const double gamma = b.col(p).dot(b.col(q));
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        ++rotations;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        double t;
        if (std::abs(zeta) > 1e15) {
          t = 1.0 / (2.0 * zeta);
        } else {
          t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Vector bp = b.col(p);
        b.col(p) = c * bp - s * b.col(q);
        b.col(q) = s * bp + c * b.col(q);
        const Vector vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    }
    if (rotations == 0) converged = true;
  }
  if (!converged) {
    throw std::runtime_error("thin_svd: no convergence after " + std::to_string(sweeps) +
                             " sweeps");
  }

  Vector norms(n);
  for (int j = 0; j < n; ++j) norms(j) = b.col(j).norm();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&norms](int i, int j) { return norms(i) > norms(j); });

  Matrix w(m, n);
  Vector sigma(n);
  Matrix vs(n, n);
  const double cutoff = norms(order[0]) * kRankTol;
  int resolved = 0;
  for (int r = 0; r < n; ++r) {
    const int j = order[r];
    sigma(r) = norms(j);
    vs.col(r) = v.col(j);
    if (norms(j) > cutoff && norms(j) > 0.0) {
      w.col(r) = b.col(j) / norms(j);
      ++resolved;
    }
  }
  complete_columns(w, resolved);

  if (transposed) return {vs, sigma, w};
  return {w, sigma, vs};
}

Matrix nearest_orthogonal(const Matrix& a) {
  if (a.rows() < a.cols()) {
    throw std::invalid_argument("nearest_orthogonal: need rows >= cols, got " + shape_of(a));
  }
  const SvdResult svd = thin_svd(a);
  return svd.w * svd.v.transpose();
}

Matrix gram_schmidt_extend(const Matrix& basis, int count, Rng& rng) {
  const int d = static_cast<int>(basis.rows());
  const int k = static_cast<int>(basis.cols());
  if (count < 1) throw std::invalid_argument("gram_schmidt_extend: count must be positive");
  if (k + count > d) {
    throw std::invalid_argument("feature dimension too small for expansion: need d >= " +
                                std::to_string(k + count) + ", have d = " + std::to_string(d));
  }
  if (k > 0) {
    require_finite(basis, "gram_schmidt_extend");
    const double dev = orthonormal_deviation(basis);
    if (dev > 1e-8) {
      throw std::invalid_argument("gram_schmidt_extend: basis not orthonormal (max Gram deviation " +
                                  std::to_string(dev) + ")");
    }
  }

  Matrix out(d, k + count);
  if (k > 0) out.leftCols(k) = basis;
  int filled = k;
  for (int added = 0; added < count; ++added) {
    int redraws = 0;
    for (;;) {
      if (redraws >= 100) {
        throw std::runtime_error("gram_schmidt_extend: degenerate draws, gave up after 100 redraws");
      }
      ++redraws;
      Vector cand(d);
      for (int i = 0; i < d; ++i) cand(i) = rng.normal();
      // modified Gram-Schmidt, applied twice for re-orthogonalization
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < filled; ++j) cand -= out.col(j).dot(cand) * out.col(j);
      }
      const double nrm = cand.norm();
      if (nrm >= 1e-6) {
        out.col(filled++) = cand / nrm;
        break;
      }
    }
  }
  return out;
}

}  // namespace nclab
