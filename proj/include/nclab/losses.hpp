#pragma once

#include "nclab/linalg.hpp"

namespace nclab {

enum class CeScope { kAllSeen, kCurrentTask };

/// Weights of the three-term training objective:
/// total = ce + lambda1 * align + lambda2 * distill.
/// `include_ce` drops the cross-entropy term (ablation switch).
struct LossSpec {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  CeScope ce_scope = CeScope::kAllSeen;
  bool include_ce = true;
};

/// -log softmax(logits)[label], stabilized by max-subtraction.
double ce_loss(const Vector& logits, int label);

/// Half squared gap between the feature/vertex cosine and 1:
/// 0.5 * (vertex . mu - 1)^2. Both arguments must be unit vectors (1e-6).
double align_loss(const Vector& mu, const Vector& vertex);

/// Same quadratic on the cosine between the previous and current model's
/// normalized features for one sample.
double distill_loss(const Vector& mu_prev, const Vector& mu_curr);

double total_loss(double ce, double align, double distill, const LossSpec& spec);

}  // namespace nclab
