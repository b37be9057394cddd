#include "nclab/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nclab {
namespace {

void require_unit(const Vector& v, const char* who, const char* arg) {
  const double n = v.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string(who) + ": " + arg + " not unit-norm (|" + arg +
                                "| = " + std::to_string(n) + ")");
  }
}

double cosine_gap_loss(const Vector& a, const Vector& b) {
  const double c = a.dot(b);
  return 0.5 * (c - 1.0) * (c - 1.0);
}

}  // namespace

double ce_loss(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw std::invalid_argument("ce_loss: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " logits");
  }
  const double m = logits.maxCoeff();
  double sum = 0.0;
  for (int i = 0; i < logits.size(); ++i) sum += std::exp(logits(i) - m);
  return m + std::log(sum) - logits(label);
}

double align_loss(const Vector& mu, const Vector& vertex) {
  require_unit(mu, "align_loss", "mu");
  require_unit(vertex, "align_loss", "vertex");
  return cosine_gap_loss(mu, vertex);
}

double distill_loss(const Vector& mu_prev, const Vector& mu_curr) {
  require_unit(mu_prev, "distill_loss", "mu_prev");
  require_unit(mu_curr, "distill_loss", "mu_curr");
  return cosine_gap_loss(mu_prev, mu_curr);
}

double total_loss(double ce, double align, double distill, const LossSpec& spec) {
  return (spec.include_ce ? ce : 0.0) + spec.lambda1 * align + spec.lambda2 * distill;
}

}  // namespace nclab
