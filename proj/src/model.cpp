#include "nclab/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace nclab {
namespace {

double leaky(double z) { return z > 0.0 ? z : FeatureModel::kLeakySlope * z; }
double leaky_grad(double z) { return z > 0.0 ? 1.0 : FeatureModel::kLeakySlope; }

// Applies the transpose Jacobian of mu = r / (|r| + eps) to a cotangent g_mu.
Vector normalization_backward(const Vector& raw, double norm, const Vector& g_mu) {
  const double denom = norm + FeatureModel::kNormEps;
  if (norm > 0.0) {
    return g_mu / denom - raw * (raw.dot(g_mu) / (norm * denom * denom));
  }
  return g_mu / FeatureModel::kNormEps;
}

Gradients zero_gradients(const FeatureModel& m) {
  Gradients g;
  g.weights.reserve(m.weights.size());
  g.biases.reserve(m.biases.size());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    g.weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
    g.biases.push_back(Vector::Zero(m.biases[l].size()));
  }
  g.head_weights = Matrix::Zero(m.head_weights.rows(), m.head_weights.cols());
  g.head_bias = Vector::Zero(m.head_bias.size());
  return g;
}

void require_same_shape(const FeatureModel& m, const Gradients& g) {
  if (g.weights.size() != m.weights.size() || g.biases.size() != m.biases.size() ||
      g.head_weights.rows() != m.head_weights.rows() ||
      g.head_weights.cols() != m.head_weights.cols() || g.head_bias.size() != m.head_bias.size()) {
    throw std::invalid_argument("apply_sgd: gradient shape does not match model");
  }
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    if (g.weights[l].rows() != m.weights[l].rows() || g.weights[l].cols() != m.weights[l].cols() ||
        g.biases[l].size() != m.biases[l].size()) {
      throw std::invalid_argument("apply_sgd: gradient shape does not match model at layer " +
                                  std::to_string(l));
    }
  }
}

}  // namespace

FeatureModel make_model(const std::vector<int>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("make_model: need at least input and feature dimensions");
  }
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("make_model: layer dimensions must be positive");
  }
  FeatureModel m;
  m.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double std_dev = std::sqrt(2.0 / fan_in);
    Matrix w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = rng.normal(0.0, std_dev);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(fan_out));
  }
  m.head_weights = Matrix(0, layer_dims.back());
  m.head_bias = Vector(0);
  return m;
}

ForwardRecord forward(const FeatureModel& m, const Vector& x) {
  if (x.size() != m.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " entries, model expects " + std::to_string(m.input_dim()));
  }
  if (!x.allFinite()) throw std::invalid_argument("forward: non-finite input");

  ForwardRecord rec;
  const std::size_t layers = m.weights.size();
  rec.activations.reserve(layers + 1);
  rec.pre_activations.reserve(layers);
  rec.activations.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    Vector z = m.weights[l] * rec.activations.back() + m.biases[l];
    if (!z.allFinite()) {
      throw std::runtime_error("forward: non-finite values at layer " + std::to_string(l));
    }
    rec.pre_activations.push_back(z);
    if (l + 1 < layers) {
      rec.activations.push_back(z.unaryExpr([](double v) { return leaky(v); }));
    } else {
      rec.activations.push_back(std::move(z));
    }
  }
  rec.raw_feature = rec.activations.back();
  const double norm = rec.raw_feature.norm();
  rec.normalized_feature = rec.raw_feature / (norm + FeatureModel::kNormEps);
  rec.logits = m.head_weights * rec.raw_feature + m.head_bias;
  return rec;
}

BackwardResult backward(const FeatureModel& m, const std::vector<TrainSample>& batch,
                        const LossSpec& spec, const EtfTarget* etf,
                        const FeatureModel* prev_model) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  if (spec.lambda1 > 0.0 && etf == nullptr) {
    throw std::invalid_argument("backward: lambda1 > 0 requires an ETF target");
  }
  if (spec.lambda2 > 0.0 && prev_model == nullptr) {
    throw std::invalid_argument("backward: lambda2 > 0 requires the previous model");
  }

  BackwardResult result;
  result.grads = zero_gradients(m);
  Gradients& g = result.grads;
  const std::size_t layers = m.weights.size();
  const int k_seen = m.k_seen();

  for (const TrainSample& sample : batch) {
    if (sample.class_index < 0 || sample.class_index >= k_seen) {
      throw std::invalid_argument("backward: class index " + std::to_string(sample.class_index) +
                                  " outside head range " + std::to_string(k_seen));
    }
    const ForwardRecord rec = forward(m, sample.x);
    const double norm = rec.raw_feature.norm();
    const Vector& mu = rec.normalized_feature;

    Vector g_raw = Vector::Zero(m.feature_dim());

    if (spec.include_ce) {
      // softmax over the sample's class set, grad = p - onehot on that set
      std::vector<int> ce_set = sample.ce_class_set;
      if (ce_set.empty()) {
        ce_set.resize(k_seen);
        for (int i = 0; i < k_seen; ++i) ce_set[i] = i;
      }
      double max_logit = -std::numeric_limits<double>::infinity();
      bool label_in_set = false;
      for (int idx : ce_set) {
        if (idx < 0 || idx >= k_seen) {
          throw std::invalid_argument("backward: ce class set index out of head range");
        }
        max_logit = std::max(max_logit, rec.logits(idx));
        label_in_set |= (idx == sample.class_index);
      }
      if (!label_in_set) {
        throw std::invalid_argument("backward: sample label missing from its ce class set");
      }
      double sum = 0.0;
      for (int idx : ce_set) sum += std::exp(rec.logits(idx) - max_logit);
      result.loss.ce += max_logit + std::log(sum) - rec.logits(sample.class_index);

      for (int idx : ce_set) {
        const double p = std::exp(rec.logits(idx) - max_logit) / sum;
        const double g_logit = p - (idx == sample.class_index ? 1.0 : 0.0);
        g.head_weights.row(idx) += g_logit * rec.raw_feature.transpose();
        g.head_bias(idx) += g_logit;
        g_raw += g_logit * m.head_weights.row(idx).transpose();
      }
    }

    if (spec.lambda1 > 0.0) {
      const int col = sample.class_index;
      if (col >= etf->num_classes) {
        throw std::invalid_argument("backward: class index " + std::to_string(col) +
                                    " has no ETF vertex (K = " + std::to_string(etf->num_classes) + ")");
      }
      const Vector vertex = etf->vertices.col(col);
      const double cos_gap = vertex.dot(mu) - 1.0;
      result.loss.align += 0.5 * cos_gap * cos_gap;
      g_raw += spec.lambda1 * normalization_backward(rec.raw_feature, norm, Vector(cos_gap * vertex));
    }

    if (spec.lambda2 > 0.0) {
      const ForwardRecord prev = forward(*prev_model, sample.x);
      const Vector& mu_prev = prev.normalized_feature;
      const double cos_gap = mu_prev.dot(mu) - 1.0;
      result.loss.distill += 0.5 * cos_gap * cos_gap;
      g_raw += spec.lambda2 * normalization_backward(rec.raw_feature, norm, Vector(cos_gap * mu_prev));
    }

    // backpropagate through the extractor; the final layer is linear
    Vector g_act = g_raw;
    for (std::size_t l = layers; l-- > 0;) {
      Vector g_z;
      if (l + 1 < layers) {
        g_z = g_act.cwiseProduct(
            rec.pre_activations[l].unaryExpr([](double v) { return leaky_grad(v); }));
      } else {
        g_z = g_act;
      }
      g.weights[l] += g_z * rec.activations[l].transpose();
      g.biases[l] += g_z;
      g_act = m.weights[l].transpose() * g_z;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t l = 0; l < layers; ++l) {
    g.weights[l] *= inv_n;
    g.biases[l] *= inv_n;
  }
  g.head_weights *= inv_n;
  g.head_bias *= inv_n;
  result.loss.ce *= inv_n;
  result.loss.align *= inv_n;
  result.loss.distill *= inv_n;
  result.loss.total = total_loss(result.loss.ce, result.loss.align, result.loss.distill, spec);
  return result;
}

void apply_sgd(FeatureModel& m, const Gradients& g, double learning_rate,
               const SgdOptions& options, SgdState* state) {
  require_same_shape(m, g);
  const bool use_momentum = options.momentum != 0.0;
  if (use_momentum && state == nullptr) {
    throw std::invalid_argument("apply_sgd: momentum requires an SgdState");
  }
  if (use_momentum) {
    // (re)size velocity buffers, preserving existing head rows across growth
    if (!state->initialized) {
      state->weights.clear();
      state->biases.clear();
      for (std::size_t l = 0; l < m.weights.size(); ++l) {
        state->weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
        state->biases.push_back(Vector::Zero(m.biases[l].size()));
      }
      state->head_weights = Matrix::Zero(m.head_weights.rows(), m.head_weights.cols());
      state->head_bias = Vector::Zero(m.head_bias.size());
      state->initialized = true;
    } else if (state->head_weights.rows() != m.head_weights.rows()) {
      const int old_rows = static_cast<int>(state->head_weights.rows());
      state->head_weights.conservativeResize(m.head_weights.rows(), Eigen::NoChange);
      state->head_bias.conservativeResize(m.head_bias.size());
      for (int r = old_rows; r < m.head_weights.rows(); ++r) {
        state->head_weights.row(r).setZero();
        state->head_bias(r) = 0.0;
      }
    }
  }

  auto update = [&](auto& theta, const auto& grad, auto* velocity) {
    if (use_momentum) {
      *velocity = options.momentum * (*velocity) + grad + options.weight_decay * theta;
      theta -= learning_rate * (*velocity);
    } else if (options.weight_decay != 0.0) {
      theta -= learning_rate * (grad + options.weight_decay * theta);
    } else {
      theta -= learning_rate * grad;
    }
  };

  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    update(m.weights[l], g.weights[l], use_momentum ? &state->weights[l] : nullptr);
    update(m.biases[l], g.biases[l], use_momentum ? &state->biases[l] : nullptr);
  }
  update(m.head_weights, g.head_weights, use_momentum ? &state->head_weights : nullptr);
  update(m.head_bias, g.head_bias, use_momentum ? &state->head_bias : nullptr);

  for (const Matrix& w : m.weights) {
    if (!w.allFinite()) throw std::runtime_error("apply_sgd: parameters became non-finite");
  }
  if (!m.head_weights.allFinite() || !m.head_bias.allFinite()) {
    throw std::runtime_error("apply_sgd: head parameters became non-finite");
  }
}

void grow_head(FeatureModel& m, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("grow_head: count must be positive");
  const int old_rows = m.k_seen();
  m.head_weights.conservativeResize(old_rows + count, Eigen::NoChange);
  m.head_bias.conservativeResize(old_rows + count);
  for (int r = old_rows; r < old_rows + count; ++r) {
    for (int c = 0; c < m.feature_dim(); ++c) m.head_weights(r, c) = rng.normal(0.0, 0.01);
    m.head_bias(r) = 0.0;
  }
}

}  // namespace nclab
