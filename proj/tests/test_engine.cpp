#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "nclab/engine.hpp"

using nclab::Ablation;
using nclab::ExperimentConfig;
using nclab::ExperimentState;
using nclab::Matrix;
using nclab::ReplayBuffer;
using nclab::Rng;
using nclab::Vector;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seed = 5;
  c.task_count = 3;
  c.classes_per_task = 2;
  c.epochs_per_task = 8;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.lambda1 = 18.0;
  c.lambda2 = 170.0;
  c.buffer_capacity = 40;
  c.hidden_dims = {24, 24};
  c.feature_dim = 8;
  c.dataset.kind = nclab::DatasetSpec::Kind::kSynthetic;
  c.dataset.synthetic.samples_per_class = 20;
  c.dataset.synthetic.input_dim = 5;
  c.dataset.synthetic.cluster_std = 0.4;
  c.dataset.synthetic.seed = 5;
  return c;
}

// hand-assembled state with an identity extractor, for direct predict tests
ExperimentState identity_state(int k) {
  ExperimentState state;
  Rng rng(1);
  state.model = nclab::make_model({k, k}, rng);
  state.model.weights[0] = Matrix::Identity(k, k);
  state.model.biases[0].setZero();
  nclab::grow_head(state.model, k, state.rng);
  std::vector<int> labels(k);
  for (int i = 0; i < k; ++i) labels[i] = i;
  state.etf = nclab::construct_etf(Matrix::Identity(k, k), labels);
  std::vector<int> slots;
  for (int i = 0; i < k; ++i) {
    state.seen_labels.push_back(i);
    state.label_to_slot.emplace(i, i);
    slots.push_back(i);
  }
  state.task_slots.push_back(slots);
  state.completed_tasks = 1;
  return state;
}

}  // namespace

TEST_CASE("reservoir keeps everything under capacity") {
  ReplayBuffer buffer;
  buffer.capacity = 5;
  Rng rng(81);
  for (int i = 0; i < 5; ++i) {
    nclab::reservoir_insert(buffer, {Vector::Ones(2), i, 0}, rng);
  }
  REQUIRE(buffer.slots.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(buffer.slots[i].label == i);
}

TEST_CASE("reservoir with zero capacity stays empty") {
  ReplayBuffer buffer;
  buffer.capacity = 0;
  Rng rng(82);
  for (int i = 0; i < 100; ++i) {
    nclab::reservoir_insert(buffer, {Vector::Ones(1), i, i % 4}, rng);
  }
  CHECK(buffer.slots.empty());
  CHECK(buffer.seen_count == 100);
}

TEST_CASE("reservoir keeps a uniform sample across tasks") {
  // 200 seeded trials, 10^4 inserts from 4 tasks into capacity 10; the
  // aggregated per-task retention must sit within 3 sigma of uniform
  const int trials = 200;
  const int capacity = 10;
  const int inserts = 10000;
  int task_counts[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < trials; ++trial) {
    ReplayBuffer buffer;
    buffer.capacity = capacity;
    Rng rng(5000 + trial);
    for (int i = 0; i < inserts; ++i) {
      const int task = i / (inserts / 4);
      nclab::reservoir_insert(buffer, {Vector::Zero(1), i, task}, rng);
    }
    for (const nclab::ReplaySample& s : buffer.slots) ++task_counts[s.task_id];
  }
  const double total = trials * capacity;
  const double expect = total / 4.0;
  const double sigma = std::sqrt(total * 0.25 * 0.75);
  for (int t = 0; t < 4; ++t) {
    CHECK(std::abs(task_counts[t] - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("predict lands on the matching vertex and breaks ties low") {
  const ExperimentState state = identity_state(4);
  for (int c = 0; c < 4; ++c) {
    CHECK(nclab::predict(state, state.etf->vertices.col(c)) == c);
  }
  // equal cosine to classes 1 and 3 -> lowest label wins
  const Vector midpoint = state.etf->vertices.col(1) + state.etf->vertices.col(3);
  CHECK(nclab::predict(state, midpoint) == 1);
}

TEST_CASE("predict matches a brute-force cosine loop") {
  ExperimentConfig config = small_config();
  config.epochs_per_task = 3;
  nclab::RunResult result = nclab::run_experiment(config);
  const ExperimentState& state = result.state;
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(5);
    for (int i = 0; i < 5; ++i) x(i) = 5.0 * rng.normal();
    const Vector mu = nclab::forward(state.model, x).normalized_feature;
    int best = -1;
    double best_score = -1e300;
    for (int slot = 0; slot < state.seen_classes(); ++slot) {
      const int label = state.seen_labels[slot];
      const double score = mu.dot(state.etf->vertices.col(state.etf->column_of(label)));
      if (score > best_score) {
        best_score = score;
        best = label;
      }
    }
    CHECK(nclab::predict(state, x) == best);
  }
}

TEST_CASE("task-IL queries restrict to the task's classes") {
  ExperimentState split = identity_state(4);
  split.task_slots = {{0, 1}, {2, 3}};
  split.completed_tasks = 2;
  const Vector toward3 = split.etf->vertices.col(3);
  CHECK(nclab::predict(split, toward3) == 3);
  const int within_first = nclab::predict(split, toward3, 0);
  CHECK((within_first == 0 || within_first == 1));
  CHECK_THROWS_WITH_AS(nclab::predict(split, toward3, 9), doctest::Contains("unknown task"),
                       std::invalid_argument);
}

TEST_CASE("first task trains to high accuracy and a valid fitted target") {
  ExperimentConfig config = small_config();
  config.task_count = 1;
  config.epochs_per_task = 200;
  config.dataset.synthetic.samples_per_class = 50;
  config.dataset.synthetic.cluster_std = 0.5;
  const nclab::TaskStream stream = nclab::build_stream(config);
  ExperimentState state = nclab::init_state(config, stream);
  nclab::train_first_task(state, stream.tasks[0]);

  CHECK(nclab::evaluate_accuracy(state, stream.tasks[0].train) >= 0.99);
  CHECK(nclab::verify_etf(*state.etf, 1e-6).is_valid);
  CHECK(state.buffer.slots.size() == 40);  // reservoir filled to capacity
  CHECK(state.prev_model.has_value());

  // NC2 emergence: centered means near the maximal-separation cosine
  nclab::evaluate_after_task(state, stream);
  REQUIRE(state.reports.size() == 1);
  CHECK(state.reports[0].pair_cos_gap_mean_abs < 0.1);
}

TEST_CASE("zero-epoch first task is rejected") {
  ExperimentConfig config = small_config();
  const nclab::TaskStream stream = nclab::build_stream(config);
  ExperimentState state = nclab::init_state(config, stream);
  state.config.epochs_per_task = 0;
  CHECK_THROWS_WITH_AS(nclab::train_first_task(state, stream.tasks[0]),
                       doctest::Contains("first task requires training"), std::invalid_argument);
}

TEST_CASE("feature dimension must cover the first task's classes") {
  ExperimentConfig config = small_config();
  config.task_count = 1;
  config.classes_per_task = 4;
  config.feature_dim = 3;
  const nclab::TaskStream stream = nclab::build_stream(config);
  ExperimentState state = nclab::init_state(config, stream);
  CHECK_THROWS_WITH_AS(nclab::train_first_task(state, stream.tasks[0]),
                       doctest::Contains("feature dimension"), std::invalid_argument);
}

TEST_CASE("train_task rejects class overlap") {
  ExperimentConfig config = small_config();
  const nclab::TaskStream stream = nclab::build_stream(config);
  ExperimentState state = nclab::init_state(config, stream);
  nclab::train_first_task(state, stream.tasks[0]);
  CHECK_THROWS_WITH_AS(nclab::train_task(state, stream.tasks[0]), doctest::Contains("overlap"),
                       std::invalid_argument);
}

TEST_CASE("a run without replay completes") {
  ExperimentConfig config = small_config();
  config.buffer_capacity = 0;
  config.epochs_per_task = 3;
  const nclab::RunResult result = nclab::run_experiment(config);
  CHECK(result.state.buffer.slots.empty());
  CHECK(result.state.accuracy.task_count() == 3);
  CHECK(result.faa >= 0.0);
}

TEST_CASE("same config twice gives bit-identical accuracy matrices") {
  ExperimentConfig config = small_config();
  config.epochs_per_task = 4;
  const nclab::RunResult a = nclab::run_experiment(config);
  const nclab::RunResult b = nclab::run_experiment(config);
  REQUIRE(a.state.accuracy.rows.size() == b.state.accuracy.rows.size());
  for (std::size_t t = 0; t < a.state.accuracy.rows.size(); ++t) {
    REQUIRE(a.state.accuracy.rows[t].size() == b.state.accuracy.rows[t].size());
    for (std::size_t i = 0; i < a.state.accuracy.rows[t].size(); ++i) {
      CHECK(a.state.accuracy.rows[t][i] == b.state.accuracy.rows[t][i]);
    }
  }
  CHECK(a.faa == b.faa);
}

TEST_CASE("single-task run reports FAA and a null FF") {
  ExperimentConfig config = small_config();
  config.task_count = 1;
  config.epochs_per_task = 10;
  const nclab::RunResult result = nclab::run_experiment(config);
  REQUIRE(result.state.accuracy.rows.size() == 1);
  CHECK(result.faa == result.state.accuracy.rows[0][0]);
  CHECK_FALSE(result.ff.has_value());
}

TEST_CASE("progressive validity and basis stability hold across a run") {
  ExperimentConfig config = small_config();
  config.epochs_per_task = 3;
  const nclab::TaskStream stream = nclab::build_stream(config);
  ExperimentState state = nclab::init_state(config, stream);
  nclab::train_first_task(state, stream.tasks[0]);
  Matrix basis_prefix = state.etf->basis;
  for (int t = 1; t < config.task_count; ++t) {
    nclab::train_task(state, stream.tasks[t]);
    CHECK(state.etf->num_classes == state.seen_classes());
    CHECK(nclab::verify_etf(*state.etf, 1e-6).is_valid);
    CHECK((state.etf->basis.leftCols(basis_prefix.cols()).array() == basis_prefix.array()).all());
    basis_prefix = state.etf->basis;
  }
  // buffer never exceeds capacity and only holds seen tasks
  CHECK(static_cast<int>(state.buffer.slots.size()) <= config.buffer_capacity);
  for (const nclab::ReplaySample& s : state.buffer.slots) {
    CHECK(s.task_id < state.completed_tasks);
  }
}

TEST_CASE("ablation switches reshape the run") {
  ExperimentConfig config = small_config();
  config.epochs_per_task = 3;

  SUBCASE("predefined global ETF holds every class from the start") {
    config.ablation = Ablation::kPredefinedGlobalEtf;
    config.feature_dim = 8;
    const nclab::RunResult result = nclab::run_experiment(config);
    CHECK(result.state.etf->num_classes == 6);  // all stream classes
    CHECK(result.state.accuracy.task_count() == 3);
  }

  SUBCASE("predefined base ETF still expands per task") {
    config.ablation = Ablation::kPredefinedBaseEtf;
    const nclab::RunResult result = nclab::run_experiment(config);
    CHECK(result.state.etf->num_classes == 6);
    CHECK(nclab::verify_etf(*result.state.etf, 1e-6).is_valid);
  }

  SUBCASE("linear classifier inference uses head logits") {
    config.ablation = Ablation::kLinearClassifierInference;
    const nclab::RunResult result = nclab::run_experiment(config);
    CHECK(result.state.accuracy.task_count() == 3);
  }
}

TEST_CASE("current-task CE scope runs deterministically") {
  ExperimentConfig config = small_config();
  config.ce_scope = nclab::CeScope::kCurrentTask;
  config.epochs_per_task = 4;
  const nclab::RunResult a = nclab::run_experiment(config);
  const nclab::RunResult b = nclab::run_experiment(config);
  CHECK(a.faa == b.faa);
  CHECK(a.state.accuracy.task_count() == 3);
}

TEST_CASE("no_ce ablation keeps the first task supervised and completes") {
  ExperimentConfig config = small_config();
  config.ablation = Ablation::kNoCe;
  config.epochs_per_task = 6;
  const nclab::RunResult result = nclab::run_experiment(config);
  CHECK(result.state.accuracy.task_count() == 3);
  // task 1 is trained with CE regardless, so its immediate accuracy is high
  CHECK(result.state.accuracy.rows[0][0] > 0.8);
}

TEST_CASE("task-IL scenario evaluates within tasks") {
  ExperimentConfig config = small_config();
  config.scenario = nclab::Scenario::kTaskIl;
  config.epochs_per_task = 4;
  const nclab::RunResult result = nclab::run_experiment(config);
  CHECK(result.faa >= 0.4);  // within-task binary problems are easy
}
