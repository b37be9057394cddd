#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nclab/data.hpp"
#include "nclab/etf.hpp"
#include "nclab/metrics.hpp"
#include "nclab/model.hpp"

namespace nclab {

enum class Scenario { kClassIl, kTaskIl };

/// Engine switches for the component-removal variants: drop one loss term,
/// replace the fitted first-task ETF with a random one (base: same size, then
/// grown per task; global: all classes' vertices fixed from the start), or
/// classify with the linear head instead of vertex cosines.
enum class Ablation {
  kNone,
  kNoCe,
  kNoAlign,
  kNoDistill,
  kPredefinedBaseEtf,
  kPredefinedGlobalEtf,
  kLinearClassifierInference,
};

enum class DiagnosticsData { kTest, kTrain };

struct DatasetSpec {
  enum class Kind { kSynthetic, kIdx } kind = Kind::kSynthetic;
  SyntheticSpec synthetic;
  struct Idx {
    std::string images;
    std::string labels;
    std::string test_images;  // optional; empty = 80/20 split of the train pair
    std::string test_labels;
  } idx;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int task_count = 5;
  int classes_per_task = 2;
  int epochs_per_task = 50;
  int batch_size = 32;
  double learning_rate = 0.03;
  double lambda1 = 18.0;
  double lambda2 = 170.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  int buffer_capacity = 200;
  CeScope ce_scope = CeScope::kAllSeen;
  Scenario scenario = Scenario::kClassIl;
  Ablation ablation = Ablation::kNone;
  DatasetSpec dataset;
  std::vector<int> hidden_dims = {64, 64};
  int feature_dim = 16;
  DiagnosticsData diagnostics_data = DiagnosticsData::kTest;
};

struct ReplaySample {
  Vector x;
  int label = 0;
  int task_id = 0;
};

/// Fixed-capacity reservoir over the sample stream.
struct ReplayBuffer {
  int capacity = 0;
  std::vector<ReplaySample> slots;
  long long seen_count = 0;
};

/// Classical reservoir sampling: the first `capacity` samples are stored;
/// sample i then replaces a uniform slot with probability capacity / i.
void reservoir_insert(ReplayBuffer& buffer, ReplaySample sample, Rng& rng);

struct ExperimentState {
  ExperimentConfig config;
  Rng rng{0};
  FeatureModel model;
  std::optional<FeatureModel> prev_model;
  std::optional<EtfTarget> etf;
  ReplayBuffer buffer;
  AccuracyMatrix accuracy;
  SgdState sgd;

  std::vector<int> seen_labels;  // class slot -> global label; slot == head row == ETF column
  std::unordered_map<int, int> label_to_slot;
  std::vector<std::vector<int>> task_slots;   // per registered task, its class slots
  std::vector<int> all_stream_labels;         // every stream class in task order
  std::vector<Vector> retained_means;         // per slot, mean feature recorded after its own task
  std::vector<NcReport> reports;              // one per completed task
  int completed_tasks = 0;
  bool etf_fit_rank_warning = false;

  int seen_classes() const { return static_cast<int>(seen_labels.size()); }
};

/// Rejects out-of-range field values (counts and rates must be positive,
/// weights nonnegative, momentum in [0, 1)).
void validate_config(const ExperimentConfig& config);

/// Builds the stream the config describes (synthetic or IDX).
TaskStream build_stream(const ExperimentConfig& config);

ExperimentState init_state(const ExperimentConfig& config, const TaskStream& stream);

/// Standard supervised training of the first task (cross-entropy only),
/// followed by the ETF fit to the per-class means of the normalized features
/// over the task's training set, the first model snapshot, and reservoir
/// insertion of the task's samples.
void train_first_task(ExperimentState& state, const TaskData& task);

/// One incremental task: expand the ETF before learning, grow the head, train
/// on current data mixed with the full buffer (reshuffled each epoch) under
/// the three-term objective with distillation against the previous snapshot,
/// then snapshot and refresh the buffer from the current task's samples.
void train_task(ExperimentState& state, const TaskData& task);

/// Vertex-cosine prediction over seen classes (or the queried task's classes
/// under Task-IL); ties go to the lowest class label. Returns a global label.
int predict(const ExperimentState& state, const Vector& x,
            std::optional<int> task_id = std::nullopt);

/// Accuracy of predict() over a dataset.
double evaluate_accuracy(const ExperimentState& state, const LabeledDataset& data,
                         std::optional<int> task_id = std::nullopt);

struct RunResult {
  ExperimentState state;
  double faa = 0.0;
  std::optional<double> ff;
};

/// Fills the next accuracy row over all completed tasks' test sets and appends
/// the collapse report; records retained means for the just-finished task.
void evaluate_after_task(ExperimentState& state, const TaskStream& stream);

/// Full stream: first task, then each later task, evaluating every completed
/// task's test set and emitting a collapse report after each task.
RunResult run_experiment(const ExperimentConfig& config);

}  // namespace nclab
