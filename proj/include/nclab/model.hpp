#pragma once

#include <optional>
#include <vector>

#include "nclab/etf.hpp"
#include "nclab/linalg.hpp"
#include "nclab/losses.hpp"
#include "nclab/rng.hpp"

namespace nclab {

/// Fully-connected feature extractor with a growing linear head. Hidden layers
/// use a leaky rectifier (slope 0.01); the final layer producing the feature is
/// linear. All members are values, so a copy is a deep, independent snapshot.
struct FeatureModel {
  std::vector<int> layer_dims;   // input, hidden..., feature
  std::vector<Matrix> weights;   // weights[l]: layer_dims[l+1] x layer_dims[l]
  std::vector<Vector> biases;
  Matrix head_weights;           // k_seen x feature_dim, rows are class prototypes
  Vector head_bias;              // k_seen

  static constexpr double kLeakySlope = 0.01;
  static constexpr double kNormEps = 1e-12;

  int input_dim() const { return layer_dims.front(); }
  int feature_dim() const { return layer_dims.back(); }
  int k_seen() const { return static_cast<int>(head_weights.rows()); }
};

/// He-style Gaussian init of the extractor; the head starts with zero classes.
FeatureModel make_model(const std::vector<int>& layer_dims, Rng& rng);

struct ForwardRecord {
  Vector raw_feature;
  Vector normalized_feature;  // raw / (|raw| + 1e-12)
  Vector logits;              // head_weights * raw + head_bias
  std::vector<Vector> pre_activations;  // z per layer, retained for backprop
  std::vector<Vector> activations;      // a[0] = x, a[l+1] = layer l output
};

ForwardRecord forward(const FeatureModel& m, const Vector& x);

/// One training example presented to backward. `class_index` is both the head
/// row and the ETF column of the true class. `ce_class_set` restricts the
/// cross-entropy softmax to a subset of head rows; empty means all seen.
struct TrainSample {
  Vector x;
  int class_index = 0;
  std::vector<int> ce_class_set;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix head_weights;
  Vector head_bias;
};

struct BatchLoss {
  double ce = 0.0;
  double align = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

struct BackwardResult {
  Gradients grads;
  BatchLoss loss;  // batch means of the per-sample terms
};

/// Exact analytic gradient of the batch-mean objective
///   ce + lambda1 * align(mu, e_class) + lambda2 * distill(mu_prev, mu)
/// with respect to every parameter, including the Jacobian of the smoothed
/// feature normalization and the softmax/CE chain. `etf` is required when
/// lambda1 > 0, `prev_model` when lambda2 > 0; the previous model is a
/// constant (no gradient flows into it). Samples are reduced in batch order.
BackwardResult backward(const FeatureModel& m, const std::vector<TrainSample>& batch,
                        const LossSpec& spec, const EtfTarget* etf,
                        const FeatureModel* prev_model);

struct SgdOptions {
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Velocity buffers for momentum > 0; grown lazily to match the model.
struct SgdState {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix head_weights;
  Vector head_bias;
  bool initialized = false;
};

/// theta <- theta - lr * (g + weight_decay * theta), through a velocity buffer
/// when momentum > 0 (state required then).
void apply_sgd(FeatureModel& m, const Gradients& g, double learning_rate,
               const SgdOptions& options = {}, SgdState* state = nullptr);

/// Appends `count` head rows, Gaussian with std 0.01 and zero bias; existing
/// rows are untouched.
void grow_head(FeatureModel& m, int count, Rng& rng);

/// Deep, independent copy (parameters are value members).
inline FeatureModel snapshot(const FeatureModel& m) { return m; }

}  // namespace nclab
