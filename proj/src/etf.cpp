#include "nclab/etf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace nclab {
namespace {

void require_distinct_labels(const std::vector<int>& labels) {
  std::unordered_set<int> seen;
  for (int label : labels) {
    if (!seen.insert(label).second) {
      throw std::invalid_argument("duplicate class label " + std::to_string(label));
    }
  }
}

}  // namespace

int EtfTarget::column_of(int label) const {
  for (int j = 0; j < static_cast<int>(class_labels.size()); ++j) {
    if (class_labels[j] == label) return j;
  }
  return -1;
}

Matrix simplex_from_basis(const Matrix& u) {
  const int k = static_cast<int>(u.cols());
  const double scale = std::sqrt(static_cast<double>(k) / (k - 1));
  Matrix centered = u;
  centered.colwise() -= Vector(u.rowwise().mean());
  return scale * centered;
}

EtfTarget construct_etf(const Matrix& basis, const std::vector<int>& class_labels) {
  const int d = static_cast<int>(basis.rows());
  const int k = static_cast<int>(basis.cols());
  if (k < 2) throw std::invalid_argument("construct_etf: need at least 2 classes, got " + std::to_string(k));
  if (d < k) {
    throw std::invalid_argument("construct_etf: feature dimension " + std::to_string(d) +
                                " smaller than class count " + std::to_string(k));
  }
  if (static_cast<int>(class_labels.size()) != k) {
    throw std::invalid_argument("construct_etf: expected " + std::to_string(k) + " labels, got " +
                                std::to_string(class_labels.size()));
  }
  require_distinct_labels(class_labels);
  require_finite(basis, "construct_etf");
  const double dev = orthonormal_deviation(basis);
  if (dev > 1e-8) {
    throw std::invalid_argument("construct_etf: basis not orthonormal (max Gram deviation " +
                                std::to_string(dev) + ")");
  }

  EtfTarget etf;
  etf.dim = d;
  etf.num_classes = k;
  etf.basis = basis;
  etf.vertices = simplex_from_basis(basis);
  etf.class_labels = class_labels;
  return etf;
}

NearestEtfFit nearest_etf(const Matrix& class_means, const std::vector<int>& class_labels) {
  const int d = static_cast<int>(class_means.rows());
  const int k = static_cast<int>(class_means.cols());
  if (k < 2) throw std::invalid_argument("nearest_etf: need at least 2 classes, got " + std::to_string(k));
  if (d < k) {
    throw std::invalid_argument("nearest_etf: feature dimension " + std::to_string(d) +
                                " smaller than class count " + std::to_string(k));
  }
  if (static_cast<int>(class_labels.size()) != k) {
    throw std::invalid_argument("nearest_etf: expected " + std::to_string(k) + " labels, got " +
                                std::to_string(class_labels.size()));
  }
  require_distinct_labels(class_labels);
  require_finite(class_means, "nearest_etf");

  // u' = sqrt((K-1)/K) * means * (I - (1/K) 1 1^T)
  const double scale = std::sqrt((k - 1.0) / k);
  Matrix u_prime = class_means;
  u_prime.colwise() -= Vector(class_means.rowwise().mean());
  u_prime *= scale;

  const SvdResult svd = thin_svd(u_prime);
  const double rank_tol = 1e-9 * std::max(1.0, svd.sigma(0));
  int rank = 0;
  for (int i = 0; i < svd.sigma.size(); ++i) {
    if (svd.sigma(i) > rank_tol) ++rank;
  }

  NearestEtfFit fit;
  fit.rank_deficient = rank < k - 1;
  fit.etf.dim = d;
  fit.etf.num_classes = k;
  fit.etf.basis = svd.w * svd.v.transpose();
  fit.etf.vertices = simplex_from_basis(fit.etf.basis);
  fit.etf.class_labels = class_labels;
  return fit;
}

EtfTarget expand_etf(const EtfTarget& prev, const std::vector<int>& new_class_labels, Rng& rng) {
  const int m = static_cast<int>(new_class_labels.size());
  if (m < 1) throw std::invalid_argument("expand_etf: need at least one new class");
  if (prev.dim < prev.num_classes + m) {
    throw std::invalid_argument("feature dimension too small for expansion: need d >= " +
                                std::to_string(prev.num_classes + m) + ", have d = " +
                                std::to_string(prev.dim));
  }
  std::vector<int> labels = prev.class_labels;
  labels.insert(labels.end(), new_class_labels.begin(), new_class_labels.end());
  require_distinct_labels(labels);

  EtfTarget etf;
  etf.dim = prev.dim;
  etf.num_classes = prev.num_classes + m;
  etf.basis = gram_schmidt_extend(prev.basis, m, rng);
  etf.vertices = simplex_from_basis(etf.basis);
  etf.class_labels = std::move(labels);
  return etf;
}

EtfDiagnostics verify_etf(const EtfTarget& e, double tol) {
  EtfDiagnostics diag;
  const int k = static_cast<int>(e.vertices.cols());
  for (int j = 0; j < k; ++j) {
    diag.max_norm_deviation = std::max(diag.max_norm_deviation,
                                       std::abs(e.vertices.col(j).norm() - 1.0));
  }
  const double target = k > 1 ? -1.0 / (k - 1) : 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double ip = e.vertices.col(i).dot(e.vertices.col(j));
      diag.max_angle_deviation = std::max(diag.max_angle_deviation, std::abs(ip - target));
    }
  }
  diag.is_valid = diag.max_norm_deviation < tol && diag.max_angle_deviation < tol;
  return diag;
}

}  // namespace nclab
