#include "nclab/engine.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nclab {
namespace {

struct PoolSample {
  Vector x;
  int slot = 0;
  int task_id = 0;
};

// Registers a task's classes: slot == head row == progressive-ETF column.
std::vector<int> register_task(ExperimentState& state, const std::vector<int>& classes) {
  std::vector<int> slots;
  for (int label : classes) {
    if (state.label_to_slot.count(label)) {
      throw std::invalid_argument("train_task: class " + std::to_string(label) +
                                  " overlaps an earlier task");
    }
    const int slot = state.seen_classes();
    state.label_to_slot.emplace(label, slot);
    state.seen_labels.push_back(label);
    slots.push_back(slot);
  }
  state.task_slots.push_back(slots);
  state.retained_means.resize(state.seen_labels.size());
  return slots;
}

LossSpec effective_loss_spec(const ExperimentConfig& c, bool first_task) {
  LossSpec spec;
  spec.ce_scope = c.ce_scope;
  if (first_task) {
    // standard supervised procedure: cross-entropy only
    spec.include_ce = true;
    return spec;
  }
  spec.include_ce = c.ablation != Ablation::kNoCe;
  spec.lambda1 = c.ablation == Ablation::kNoAlign ? 0.0 : c.lambda1;
  spec.lambda2 = c.ablation == Ablation::kNoDistill ? 0.0 : c.lambda2;
  return spec;
}

void train_epochs(ExperimentState& state, const std::vector<PoolSample>& pool,
                  const LossSpec& spec) {
  const ExperimentConfig& c = state.config;
  const EtfTarget* etf = (spec.lambda1 > 0.0 && state.etf) ? &*state.etf : nullptr;
  const FeatureModel* prev = (spec.lambda2 > 0.0 && state.prev_model) ? &*state.prev_model : nullptr;
  const SgdOptions sgd_options{c.momentum, c.weight_decay};

  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainSample> batch;
  batch.reserve(c.batch_size);

  for (int epoch = 0; epoch < c.epochs_per_task; ++epoch) {
    shuffle(order, state.rng);
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::size_t end = std::min(order.size(), start + c.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        const PoolSample& s = pool[order[i]];
        TrainSample ts;
        ts.x = s.x;
        ts.class_index = s.slot;
        if (spec.ce_scope == CeScope::kCurrentTask) {
          ts.ce_class_set = state.task_slots.at(s.task_id);
        }
        batch.push_back(std::move(ts));
      }
      const BackwardResult result = backward(state.model, batch, spec, etf, prev);
      apply_sgd(state.model, result.grads, c.learning_rate, sgd_options, &state.sgd);
    }
  }
}

// Per-class means of normalized features over a dataset, in slot order.
Matrix class_feature_means(const ExperimentState& state, const LabeledDataset& data,
                           const std::vector<int>& slots) {
  const int d = state.model.feature_dim();
  Matrix means = Matrix::Zero(d, static_cast<int>(slots.size()));
  std::vector<int> counts(slots.size(), 0);
  for (int i = 0; i < data.size(); ++i) {
    const int slot = state.label_to_slot.at(data.labels[i]);
    const auto pos = std::find(slots.begin(), slots.end(), slot);
    if (pos == slots.end()) continue;
    const int col = static_cast<int>(pos - slots.begin());
    means.col(col) += forward(state.model, data.inputs[i]).normalized_feature;
    ++counts[col];
  }
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (counts[j] == 0) {
      throw std::runtime_error("class_feature_means: no samples for slot " +
                               std::to_string(slots[j]));
    }
    means.col(static_cast<int>(j)) /= static_cast<double>(counts[j]);
  }
  return means;
}

void insert_task_into_buffer(ExperimentState& state, const TaskData& task, int task_id) {
  for (int i = 0; i < task.train.size(); ++i) {
    reservoir_insert(state.buffer, {task.train.inputs[i], task.train.labels[i], task_id},
                     state.rng);
  }
}

// Progressive-validity self-checks after an expansion; these guard invariants
// the rest of the run relies on and should never fire.
void check_expansion(const EtfTarget& etf, const Matrix& old_basis) {
  const int k_old = static_cast<int>(old_basis.cols());
  if ((etf.basis.leftCols(k_old).array() != old_basis.array()).any()) {
    throw std::logic_error("expand_etf modified an existing basis column");
  }
  const EtfDiagnostics diag = verify_etf(etf, 1e-6);
  if (!diag.is_valid) {
    throw std::logic_error("expanded ETF failed verification (norm dev " +
                           std::to_string(diag.max_norm_deviation) + ", angle dev " +
                           std::to_string(diag.max_angle_deviation) + ")");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  if (c.task_count < 1) throw std::invalid_argument("config: task_count must be positive");
  if (c.classes_per_task < 1) throw std::invalid_argument("config: classes_per_task must be positive");
  if (c.epochs_per_task < 1) throw std::invalid_argument("config: epochs_per_task must be positive");
  if (c.batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (c.lambda1 < 0.0 || c.lambda2 < 0.0) throw std::invalid_argument("config: loss weights must be >= 0");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw std::invalid_argument("config: momentum must be in [0, 1)");
  if (c.weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (c.buffer_capacity < 0) throw std::invalid_argument("config: buffer_capacity must be >= 0");
  if (c.feature_dim < 1) throw std::invalid_argument("config: feature_dim must be positive");
  for (int h : c.hidden_dims) {
    if (h < 1) throw std::invalid_argument("config: hidden dimensions must be positive");
  }
}

void reservoir_insert(ReplayBuffer& buffer, ReplaySample sample, Rng& rng) {
  ++buffer.seen_count;
  if (buffer.capacity <= 0) return;
  if (static_cast<long long>(buffer.slots.size()) < buffer.capacity) {
    buffer.slots.push_back(std::move(sample));
    return;
  }
  const std::uint64_t j = rng.uniform_int(static_cast<std::uint64_t>(buffer.seen_count));
  if (j < static_cast<std::uint64_t>(buffer.capacity)) {
    buffer.slots[j] = std::move(sample);
  }
}

TaskStream build_stream(const ExperimentConfig& config) {
  if (config.dataset.kind == DatasetSpec::Kind::kSynthetic) {
    SyntheticSpec spec = config.dataset.synthetic;
    spec.tasks = config.task_count;
    spec.classes_per_task = config.classes_per_task;
    return gen_synthetic_stream(spec);
  }
  const auto& idx = config.dataset.idx;
  if (!idx.test_images.empty()) {
    return load_idx_stream(idx.images, idx.labels, idx.test_images, idx.test_labels,
                           config.task_count, config.classes_per_task);
  }
  return load_idx_stream(idx.images, idx.labels, config.task_count, config.classes_per_task);
}

ExperimentState init_state(const ExperimentConfig& config, const TaskStream& stream) {
  validate_config(config);
  if (static_cast<int>(stream.tasks.size()) != config.task_count) {
    throw std::invalid_argument("init_state: stream has " + std::to_string(stream.tasks.size()) +
                                " tasks, config expects " + std::to_string(config.task_count));
  }
  ExperimentState state;
  state.config = config;
  state.rng = Rng(config.seed);
  state.buffer.capacity = config.buffer_capacity;

  std::vector<int> dims;
  dims.push_back(stream.input_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.feature_dim);
  state.model = make_model(dims, state.rng);

  for (const TaskData& task : stream.tasks) {
    state.all_stream_labels.insert(state.all_stream_labels.end(), task.classes.begin(),
                                   task.classes.end());
  }
  return state;
}

void train_first_task(ExperimentState& state, const TaskData& task) {
  const ExperimentConfig& c = state.config;
  if (state.completed_tasks != 0) {
    throw std::invalid_argument("train_first_task: a task was already completed");
  }
  if (c.epochs_per_task < 1) {
    throw std::invalid_argument("first task requires training (epochs_per_task >= 1)");
  }
  const int k1 = static_cast<int>(task.classes.size());
  if (state.model.feature_dim() < k1) {
    throw std::invalid_argument("feature dimension " + std::to_string(state.model.feature_dim()) +
                                " smaller than first-task class count " + std::to_string(k1));
  }

  const std::vector<int> slots = register_task(state, task.classes);
  grow_head(state.model, k1, state.rng);

  std::vector<PoolSample> pool;
  pool.reserve(task.train.size());
  for (int i = 0; i < task.train.size(); ++i) {
    pool.push_back({task.train.inputs[i], state.label_to_slot.at(task.train.labels[i]), 0});
  }
  train_epochs(state, pool, effective_loss_spec(c, /*first_task=*/true));

  switch (c.ablation) {
    case Ablation::kPredefinedBaseEtf: {
      // random basis of the first task's size; expansion proceeds as usual
      const Matrix basis = gram_schmidt_extend(Matrix(state.model.feature_dim(), 0), k1, state.rng);
      state.etf = construct_etf(basis, task.classes);
      break;
    }
    case Ablation::kPredefinedGlobalEtf: {
      // one fixed ETF holding every class's vertex from the start
      const int total = static_cast<int>(state.all_stream_labels.size());
      const Matrix basis = gram_schmidt_extend(Matrix(state.model.feature_dim(), 0), total, state.rng);
      state.etf = construct_etf(basis, state.all_stream_labels);
      break;
    }
    default: {
      const Matrix means = class_feature_means(state, task.train, slots);
      NearestEtfFit fit = nearest_etf(means, task.classes);
      state.etf_fit_rank_warning = fit.rank_deficient;
      state.etf = std::move(fit.etf);
      break;
    }
  }

  state.prev_model = snapshot(state.model);
  insert_task_into_buffer(state, task, 0);
  state.completed_tasks = 1;
}

void train_task(ExperimentState& state, const TaskData& task) {
  const ExperimentConfig& c = state.config;
  if (state.completed_tasks < 1 || !state.etf || !state.prev_model) {
    throw std::invalid_argument("train_task: first task has not been trained");
  }
  const int task_id = state.completed_tasks;
  for (int label : task.classes) {
    if (state.label_to_slot.count(label)) {
      throw std::invalid_argument("train_task: class " + std::to_string(label) +
                                  " overlaps an earlier task");
    }
  }

  // (1) expand the target before learning the task
  if (c.ablation == Ablation::kPredefinedGlobalEtf) {
    for (int label : task.classes) {
      if (state.etf->column_of(label) < 0) {
        throw std::invalid_argument("train_task: class " + std::to_string(label) +
                                    " missing from the predefined global ETF");
      }
    }
  } else {
    const Matrix old_basis = state.etf->basis;
    state.etf = expand_etf(*state.etf, task.classes, state.rng);
    check_expansion(*state.etf, old_basis);
  }

  // (2) register classes and grow the head
  const std::vector<int> slots = register_task(state, task.classes);
  grow_head(state.model, static_cast<int>(task.classes.size()), state.rng);

  // (3) current data and the full buffer, reshuffled each epoch
  std::vector<PoolSample> pool;
  pool.reserve(task.train.size() + state.buffer.slots.size());
  for (int i = 0; i < task.train.size(); ++i) {
    pool.push_back({task.train.inputs[i], state.label_to_slot.at(task.train.labels[i]), task_id});
  }
  for (const ReplaySample& s : state.buffer.slots) {
    pool.push_back({s.x, state.label_to_slot.at(s.label), s.task_id});
  }

  // (4) three-term objective with distillation against the previous snapshot
  train_epochs(state, pool, effective_loss_spec(c, /*first_task=*/false));

  // (5) snapshot, then refresh the reservoir with the current task's samples
  state.prev_model = snapshot(state.model);
  insert_task_into_buffer(state, task, task_id);
  state.completed_tasks = task_id + 1;
}

int predict(const ExperimentState& state, const Vector& x, std::optional<int> task_id) {
  if (!state.etf) throw std::invalid_argument("predict: no ETF target yet");
  const std::vector<int>* restrict_slots = nullptr;
  if (task_id) {
    if (*task_id < 0 || *task_id >= state.completed_tasks) {
      throw std::invalid_argument("predict: unknown task id " + std::to_string(*task_id));
    }
    restrict_slots = &state.task_slots[*task_id];
  }

  const ForwardRecord rec = forward(state.model, x);
  const bool linear = state.config.ablation == Ablation::kLinearClassifierInference;

  int best_label = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  auto consider = [&](int slot) {
    const int label = state.seen_labels[slot];
    double score;
    if (linear) {
      score = rec.logits(slot);
    } else {
      const int col = state.etf->column_of(label);
      score = rec.normalized_feature.dot(state.etf->vertices.col(col));
    }
    if (score > best_score || (score == best_score && label < best_label)) {
      best_score = score;
      best_label = label;
    }
  };
  if (restrict_slots) {
    for (int slot : *restrict_slots) consider(slot);
  } else {
    for (int slot = 0; slot < state.seen_classes(); ++slot) consider(slot);
  }
  return best_label;
}

double evaluate_accuracy(const ExperimentState& state, const LabeledDataset& data,
                         std::optional<int> task_id) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: no samples");
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    if (predict(state, data.inputs[i], task_id) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

void evaluate_after_task(ExperimentState& state, const TaskStream& stream) {
  const int done = state.completed_tasks;
  if (done < 1) throw std::invalid_argument("evaluate_after_task: nothing trained yet");

  std::vector<double> row;
  for (int i = 0; i < done; ++i) {
    const std::optional<int> query =
        state.config.scenario == Scenario::kTaskIl ? std::optional<int>(i) : std::nullopt;
    row.push_back(evaluate_accuracy(state, stream.tasks[i].test, query));
  }
  state.accuracy.rows.push_back(std::move(row));

  // collapse diagnostics over the configured split of every seen task
  std::vector<std::vector<Vector>> features(state.seen_classes());
  for (int t = 0; t < done; ++t) {
    const LabeledDataset& data = state.config.diagnostics_data == DiagnosticsData::kTrain
                                     ? stream.tasks[t].train
                                     : stream.tasks[t].test;
    for (int i = 0; i < data.size(); ++i) {
      const int slot = state.label_to_slot.at(data.labels[i]);
      features[slot].push_back(forward(state.model, data.inputs[i]).normalized_feature);
    }
  }

  // record retained means for the just-finished task before building the report
  for (int slot : state.task_slots[done - 1]) {
    Vector mean = Vector::Zero(state.model.feature_dim());
    for (const Vector& f : features[slot]) mean += f;
    state.retained_means[slot] = mean / static_cast<double>(features[slot].size());
  }

  if (state.seen_classes() >= 2) {
    Matrix prototypes(state.etf->dim, state.seen_classes());
    for (int slot = 0; slot < state.seen_classes(); ++slot) {
      prototypes.col(slot) = state.etf->vertices.col(state.etf->column_of(state.seen_labels[slot]));
    }
    std::vector<std::vector<int>> partition(state.task_slots.begin(),
                                            state.task_slots.begin() + done);
    std::vector<Vector> retained(state.retained_means.begin(),
                                 state.retained_means.begin() + state.seen_classes());
    state.reports.push_back(
        nc_report(features, prototypes, partition, retained, &state.model.head_weights));
  }
}

RunResult run_experiment(const ExperimentConfig& config) {
  const TaskStream stream = build_stream(config);
  RunResult result{init_state(config, stream), 0.0, std::nullopt};
  ExperimentState& state = result.state;

  train_first_task(state, stream.tasks[0]);
  evaluate_after_task(state, stream);
  for (int t = 1; t < config.task_count; ++t) {
    train_task(state, stream.tasks[t]);
    evaluate_after_task(state, stream);
  }

  result.faa = faa(state.accuracy);
  result.ff = ff(state.accuracy);
  return result;
}

}  // namespace nclab
