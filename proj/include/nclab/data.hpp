#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nclab/linalg.hpp"
#include "nclab/rng.hpp"

namespace nclab {

struct LabeledDataset {
  std::vector<Vector> inputs;
  std::vector<int> labels;
  std::vector<int> class_set;  // sorted, unique

  int size() const { return static_cast<int>(inputs.size()); }
};

struct TaskData {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<int> classes;  // sorted
};

/// Ordered tasks with pairwise-disjoint class sets (checked at construction).
struct TaskStream {
  std::vector<TaskData> tasks;
  int input_dim = 0;
};

/// Throws when two tasks share a class label.
void validate_stream(const TaskStream& stream);

struct SyntheticSpec {
  int tasks = 5;
  int classes_per_task = 2;
  int samples_per_class = 100;
  int input_dim = 8;
  double cluster_std = 1.0;
  std::uint64_t seed = 0;
};

/// Gaussian blob stream: class centers drawn uniformly on the radius-5 sphere
/// with minimum pairwise distance 2 * cluster_std (rejection sampling, error
/// after 1e5 draws), samples = center + cluster_std * N(0, I), 80/20
/// train/test split per class. Classes are numbered 0..tasks*cpt-1 in task
/// order. Deterministic per seed.
TaskStream gen_synthetic_stream(const SyntheticSpec& spec);

/// Raw IDX pair: big-endian magic 0x803 (images, uint8) / 0x801 (labels),
/// pixels scaled to [0, 1].
LabeledDataset load_idx_pair(const std::string& image_path, const std::string& label_path);

/// Splits an IDX pair into tasks of `classes_per_task` classes in ascending
/// label order, 80/20 train/test per class (file order).
TaskStream load_idx_stream(const std::string& image_path, const std::string& label_path,
                           int tasks, int classes_per_task);

/// Same partition with explicit train and test files.
TaskStream load_idx_stream(const std::string& train_images, const std::string& train_labels,
                           const std::string& test_images, const std::string& test_labels,
                           int tasks, int classes_per_task);

}  // namespace nclab
