#include "nclab/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace nclab {
namespace {

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double population_std(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

}  // namespace

double faa(const AccuracyMatrix& acc) {
  const int t = acc.task_count();
  if (t < 1) throw std::invalid_argument("faa: empty accuracy matrix");
  const std::vector<double>& last = acc.rows.back();
  if (static_cast<int>(last.size()) != t) {
    throw std::invalid_argument("faa: last row has " + std::to_string(last.size()) +
                                " entries, expected " + std::to_string(t));
  }
  double sum = 0.0;
  for (double a : last) sum += a;
  return sum / static_cast<double>(t);
}

std::optional<double> ff(const AccuracyMatrix& acc) {
  const int t = acc.task_count();
  if (t < 1) throw std::invalid_argument("ff: empty accuracy matrix");
  if (t == 1) return std::nullopt;
  const std::vector<double>& last = acc.rows.back();
  if (static_cast<int>(last.size()) != t) {
    throw std::invalid_argument("ff: last row incomplete");
  }
  double sum = 0.0;
  for (int i = 0; i <= t - 2; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int row = i; row <= t - 2; ++row) {
      if (static_cast<int>(acc.rows[row].size()) <= i) {
        throw std::invalid_argument("ff: row " + std::to_string(row) + " missing entry " +
                                    std::to_string(i));
      }
      best = std::max(best, acc.rows[row][i]);
    }
    sum += best - last[i];
  }
  return sum / static_cast<double>(t - 1);
}

double nc1_variability(const std::vector<Vector>& class_features) {
  if (class_features.empty()) throw std::invalid_argument("nc1_variability: empty class");
  const int n = static_cast<int>(class_features.size());
  Vector mean = Vector::Zero(class_features.front().size());
  for (const Vector& f : class_features) mean += f;
  mean /= static_cast<double>(n);
  // trace of the average outer product of deviations = mean squared deviation
  double trace = 0.0;
  for (const Vector& f : class_features) trace += (f - mean).squaredNorm();
  return trace / static_cast<double>(n);
}

NcReport nc_report(const std::vector<std::vector<Vector>>& features_per_class,
                   const Matrix& prototypes,
                   const std::vector<std::vector<int>>& task_partition,
                   const std::vector<Vector>& retained_means,
                   const Matrix* head_weights) {
  const int k = static_cast<int>(features_per_class.size());
  if (k < 2) throw std::invalid_argument("nc_report: need at least 2 classes");
  if (prototypes.cols() != k) {
    throw std::invalid_argument("nc_report: expected " + std::to_string(k) +
                                " prototype columns, got " + std::to_string(prototypes.cols()));
  }
  if (!retained_means.empty() && static_cast<int>(retained_means.size()) != k) {
    throw std::invalid_argument("nc_report: retained means must cover every class or be empty");
  }
  for (int c = 0; c < k; ++c) {
    if (features_per_class[c].empty()) {
      throw std::invalid_argument("nc_report: class " + std::to_string(c) + " has no samples");
    }
  }

  NcReport report;
  const int d = static_cast<int>(features_per_class.front().front().size());

  std::vector<Vector> class_means(k);
  for (int c = 0; c < k; ++c) {
    Vector mean = Vector::Zero(d);
    for (const Vector& f : features_per_class[c]) mean += f;
    class_means[c] = mean / static_cast<double>(features_per_class[c].size());
    report.class_variability.push_back(nc1_variability(features_per_class[c]));
  }

  Vector global_mean = Vector::Zero(d);
  for (const Vector& mean : class_means) global_mean += mean;
  global_mean /= static_cast<double>(k);
  report.global_mean = global_mean;

  std::vector<Vector> centered(k);
  for (int c = 0; c < k; ++c) {
    Vector dev = class_means[c] - global_mean;
    const double n = dev.norm();
    centered[c] = n > 0.0 ? Vector(dev / n) : Vector(Vector::Zero(d));
  }

  const double ideal = -1.0 / (k - 1);
  double gap_sum = 0.0;
  double gap_abs_sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double gap = centered[i].dot(centered[j]) - ideal;
      gap_sum += gap;
      gap_abs_sum += std::abs(gap);
      ++pairs;
    }
  }
  report.pair_cos_gap_mean = gap_sum / pairs;
  report.pair_cos_gap_mean_abs = gap_abs_sum / pairs;

  // per-task std of within-task pair cosines, averaged over tasks with pairs
  double std_sum = 0.0;
  int tasks_with_pairs = 0;
  for (const std::vector<int>& classes : task_partition) {
    std::vector<double> cosines;
    for (std::size_t a = 0; a < classes.size(); ++a) {
      for (std::size_t b = a + 1; b < classes.size(); ++b) {
        cosines.push_back(centered[classes[a]].dot(centered[classes[b]]));
      }
    }
    if (!cosines.empty()) {
      std_sum += population_std(cosines);
      ++tasks_with_pairs;
    }
  }
  report.within_task_cos_std = tasks_with_pairs > 0 ? std_sum / tasks_with_pairs : 0.0;

  if (!retained_means.empty()) {
    double retention_sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double r = cosine(retained_means[c], class_means[c]);
      report.retention_cosine.push_back(r);
      retention_sum += r;
    }
    report.retention_cosine_mean = retention_sum / k;
  }

  auto cross_class = [&](auto prototype_of) {
    double global_sum = 0.0;
    int global_pairs = 0;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        if (i == j) continue;
        global_sum += cosine(centered[i], prototype_of(j));
        ++global_pairs;
      }
    }
    double within_sum = 0.0;
    int tasks_counted = 0;
    for (const std::vector<int>& classes : task_partition) {
      double task_sum = 0.0;
      int task_pairs = 0;
      for (int a : classes) {
        for (int b : classes) {
          if (a == b) continue;
          task_sum += cosine(centered[a], prototype_of(b));
          ++task_pairs;
        }
      }
      if (task_pairs > 0) {
        within_sum += task_sum / task_pairs;
        ++tasks_counted;
      }
    }
    return std::pair<double, double>(global_pairs > 0 ? global_sum / global_pairs : 0.0,
                                     tasks_counted > 0 ? within_sum / tasks_counted : 0.0);
  };

  const auto [vertex_global, vertex_within] =
      cross_class([&](int j) { return Vector(prototypes.col(j)); });
  report.cross_class_vertex_cos = vertex_global;
  report.cross_class_vertex_cos_within = vertex_within;

  if (head_weights != nullptr) {
    if (head_weights->rows() != k) {
      throw std::invalid_argument("nc_report: head has " + std::to_string(head_weights->rows()) +
                                  " rows, expected " + std::to_string(k));
    }
    const auto [head_global, head_within] =
        cross_class([&](int j) { return Vector(head_weights->row(j).transpose()); });
    report.cross_class_head_cos = head_global;
    report.cross_class_head_cos_within = head_within;
  }

  return report;
}

}  // namespace nclab
