#pragma once

#include <optional>
#include <vector>

#include "nclab/linalg.hpp"

namespace nclab {

/// Lower-triangular accuracy record: rows[t][i] is the accuracy on task i's
/// test set measured after learning task t, defined for i <= t.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  int task_count() const { return static_cast<int>(rows.size()); }
};

/// Final average accuracy: mean of the last row.
double faa(const AccuracyMatrix& acc);

/// Average forgetting: (1/(T-1)) sum_i (max_{t <= T-2} a_i^t - a_i^{T-1}).
/// Undefined (nullopt) for a single task. Backward transfer keeps its sign.
std::optional<double> ff(const AccuracyMatrix& acc);

/// Collapse and separation statistics of per-class feature clouds. All cosines
/// are between centered-normalized class means unless noted; "gap" means the
/// offset from the maximal-separation value -1/(K-1) over K seen classes.
struct NcReport {
  std::vector<double> class_variability;  // NC1: trace of the within-class covariance
  double pair_cos_gap_mean = 0.0;         // mean over class pairs of (cos + 1/(K-1))
  double pair_cos_gap_mean_abs = 0.0;     // same with absolute gaps
  double within_task_cos_std = 0.0;       // std of within-task pair cosines, averaged over tasks
  std::vector<double> retention_cosine;       // cos(retained mean, current mean) per class
  std::optional<double> retention_cosine_mean;
  double cross_class_vertex_cos = 0.0;         // mean cos(mean_k, vertex_k'), k != k'
  double cross_class_vertex_cos_within = 0.0;  // restricted to same-task pairs, averaged over tasks
  std::optional<double> cross_class_head_cos;  // head-prototype variants, when a head exists
  std::optional<double> cross_class_head_cos_within;
  Vector global_mean;
};

/// Trace of the population within-class covariance for one class's features.
double nc1_variability(const std::vector<Vector>& class_features);

/// Computes the report over K classes. `features_per_class[k]` holds the
/// normalized features of class k (>= 1 each, K >= 2); `prototypes` has one
/// column per class (the ETF vertices of the seen classes); `task_partition`
/// groups class indices by task; `retained_means` (empty or size K) are the
/// historical class means for the retention cosines; `head_weights` (rows =
/// classes) switches on the head-prototype variants.
NcReport nc_report(const std::vector<std::vector<Vector>>& features_per_class,
                   const Matrix& prototypes,
                   const std::vector<std::vector<int>>& task_partition,
                   const std::vector<Vector>& retained_means,
                   const Matrix* head_weights = nullptr);

}  // namespace nclab
