#pragma once

#include <vector>

#include "nclab/linalg.hpp"

namespace nclab {

/// A simplex equiangular tight frame over K classes in R^d together with the
/// orthonormal basis that generated it. Columns of `vertices` are unit vectors
/// with pairwise inner product -1/(K-1); column j is the target of class
/// `class_labels[j]`. Outputs of construct_etf / nearest_etf / expand_etf
/// satisfy these properties; the struct itself is a plain value so that
/// verify_etf can also measure corrupted instances.
struct EtfTarget {
  int dim = 0;
  int num_classes = 0;
  Matrix vertices;  // dim x num_classes
  Matrix basis;     // dim x num_classes, orthonormal columns
  std::vector<int> class_labels;

  /// Column index of a global class label, or -1 when absent.
  int column_of(int label) const;
};

struct EtfDiagnostics {
  double max_norm_deviation = 0.0;
  double max_angle_deviation = 0.0;
  bool is_valid = false;
};

/// The simplex map: sqrt(K/(K-1)) * u * (I_K - (1/K) 1 1^T).
Matrix simplex_from_basis(const Matrix& u);

/// Builds the ETF generated by an orthonormal basis (d x K, K >= 2, d >= K).
EtfTarget construct_etf(const Matrix& basis, const std::vector<int>& class_labels);

struct NearestEtfFit {
  EtfTarget etf;
  /// Set when the centered means have rank < K-1; the fit is then non-unique
  /// but still deterministic through the SVD's canonical completion.
  bool rank_deficient = false;
};

/// Frobenius-nearest ETF to a d x K matrix of class means: center and scale the
/// means, take the nearest matrix with orthonormal columns, and map it back
/// through the simplex construction.
NearestEtfFit nearest_etf(const Matrix& class_means, const std::vector<int>& class_labels);

/// Grows an ETF by m new classes: the generating basis gains m Gram-Schmidt
/// columns (existing columns untouched, bit for bit) and the vertices are
/// rebuilt for K + m classes. Old labels keep their column indices; new labels
/// are appended in the given order.
EtfTarget expand_etf(const EtfTarget& prev, const std::vector<int>& new_class_labels, Rng& rng);

/// Measures the equal-norm and equiangularity defects of an ETF candidate.
EtfDiagnostics verify_etf(const EtfTarget& e, double tol);

}  // namespace nclab
