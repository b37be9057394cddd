#include "nclab/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace nclab {
namespace {

constexpr double kSphereRadius = 5.0;
constexpr int kMaxCenterDraws = 100000;

void finalize_class_set(LabeledDataset& ds) {
  std::set<int> classes(ds.labels.begin(), ds.labels.end());
  ds.class_set.assign(classes.begin(), classes.end());
}

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw std::runtime_error("idx: truncated file " + path);
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

// groups sample indices by label, preserving file/draw order within a class
std::map<int, std::vector<int>> indices_by_class(const LabeledDataset& ds) {
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

void append_samples(LabeledDataset& out, const LabeledDataset& src, const std::vector<int>& idx) {
  for (int i : idx) {
    out.inputs.push_back(src.inputs[i]);
    out.labels.push_back(src.labels[i]);
  }
}

TaskStream partition_into_tasks(const LabeledDataset& train, const LabeledDataset& test,
                                int tasks, int classes_per_task) {
  if (tasks < 1 || classes_per_task < 1) {
    throw std::invalid_argument("idx stream: tasks and classes_per_task must be positive");
  }
  std::set<int> classes(train.labels.begin(), train.labels.end());
  if (static_cast<int>(classes.size()) != tasks * classes_per_task) {
    throw std::invalid_argument("idx stream: file has " + std::to_string(classes.size()) +
                                " classes, need exactly " +
                                std::to_string(tasks * classes_per_task));
  }
  std::vector<int> ordered(classes.begin(), classes.end());

  TaskStream stream;
  stream.input_dim = train.inputs.empty() ? 0 : static_cast<int>(train.inputs.front().size());
  auto train_by_class = indices_by_class(train);
  auto test_by_class = indices_by_class(test);
  for (int t = 0; t < tasks; ++t) {
    TaskData task;
    for (int c = 0; c < classes_per_task; ++c) {
      const int label = ordered[t * classes_per_task + c];
      task.classes.push_back(label);
      append_samples(task.train, train, train_by_class[label]);
      append_samples(task.test, test, test_by_class[label]);
    }
    finalize_class_set(task.train);
    finalize_class_set(task.test);
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

}  // namespace

void validate_stream(const TaskStream& stream) {
  std::set<int> seen;
  for (const TaskData& task : stream.tasks) {
    for (int label : task.classes) {
      if (!seen.insert(label).second) {
        throw std::invalid_argument("task stream: class " + std::to_string(label) +
                                    " appears in more than one task");
      }
    }
  }
}

TaskStream gen_synthetic_stream(const SyntheticSpec& spec) {
  if (spec.tasks < 1 || spec.classes_per_task < 1) {
    throw std::invalid_argument("gen_synthetic_stream: tasks and classes_per_task must be positive");
  }
  if (spec.samples_per_class < 5) {
    throw std::invalid_argument("gen_synthetic_stream: need at least 5 samples per class");
  }
  if (spec.input_dim < 1) throw std::invalid_argument("gen_synthetic_stream: input_dim must be positive");
  if (spec.cluster_std < 0.0) throw std::invalid_argument("gen_synthetic_stream: cluster_std must be >= 0");

  Rng rng(spec.seed);
  const int total_classes = spec.tasks * spec.classes_per_task;

  // class centers: uniform on the radius-5 sphere, rejection on min distance
  std::vector<Vector> centers;
  const double min_dist = 2.0 * spec.cluster_std;
  int draws = 0;
  while (static_cast<int>(centers.size()) < total_classes) {
    if (++draws > kMaxCenterDraws) {
      throw std::runtime_error(
          "gen_synthetic_stream: could not place class centers after 100000 draws; "
          "try a larger input_dim or smaller cluster_std");
    }
    Vector dir(spec.input_dim);
    for (int i = 0; i < spec.input_dim; ++i) dir(i) = rng.normal();
    const double n = dir.norm();
    if (n < 1e-12) continue;
    Vector center = (kSphereRadius / n) * dir;
    bool ok = true;
    for (const Vector& other : centers) {
      if ((center - other).norm() < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) centers.push_back(std::move(center));
  }

  const int n_test = std::max(1, spec.samples_per_class / 5);
  const int n_train = spec.samples_per_class - n_test;

  TaskStream stream;
  stream.input_dim = spec.input_dim;
  for (int t = 0; t < spec.tasks; ++t) {
    TaskData task;
    for (int c = 0; c < spec.classes_per_task; ++c) {
      const int label = t * spec.classes_per_task + c;
      task.classes.push_back(label);
      for (int s = 0; s < spec.samples_per_class; ++s) {
        Vector x = centers[label];
        for (int i = 0; i < spec.input_dim; ++i) x(i) += spec.cluster_std * rng.normal();
        LabeledDataset& target = s < n_train ? task.train : task.test;
        target.inputs.push_back(std::move(x));
        target.labels.push_back(label);
      }
    }
    finalize_class_set(task.train);
    finalize_class_set(task.test);
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

LabeledDataset load_idx_pair(const std::string& image_path, const std::string& label_path) {
  std::ifstream images(image_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx: cannot open " + image_path);
  const std::uint32_t image_magic = read_be_u32(images, image_path);
  if (image_magic != 0x00000803u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x", image_magic);
    throw std::runtime_error("idx: bad image magic " + std::string(buf) + " in " + image_path +
                             " (expected 0x00000803)");
  }
  const std::uint32_t count = read_be_u32(images, image_path);
  const std::uint32_t rows = read_be_u32(images, image_path);
  const std::uint32_t cols = read_be_u32(images, image_path);
  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> raw(std::size_t(count) * pixels);
  images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (images.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error("idx: truncated image data in " + image_path);
  }

  std::ifstream labels(label_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx: cannot open " + label_path);
  const std::uint32_t label_magic = read_be_u32(labels, label_path);
  if (label_magic != 0x00000801u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x", label_magic);
    throw std::runtime_error("idx: bad label magic " + std::string(buf) + " in " + label_path +
                             " (expected 0x00000801)");
  }
  const std::uint32_t label_count = read_be_u32(labels, label_path);
  if (label_count != count) {
    throw std::runtime_error("idx: label/image count mismatch (" + std::to_string(label_count) +
                             " labels vs " + std::to_string(count) + " images)");
  }
  std::vector<unsigned char> raw_labels(label_count);
  labels.read(reinterpret_cast<char*>(raw_labels.data()),
              static_cast<std::streamsize>(raw_labels.size()));
  if (labels.gcount() != static_cast<std::streamsize>(raw_labels.size())) {
    throw std::runtime_error("idx: truncated label data in " + label_path);
  }

  LabeledDataset ds;
  ds.inputs.reserve(count);
  ds.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Vector x(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      x(static_cast<int>(p)) = raw[i * pixels + p] / 255.0;
    }
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(raw_labels[i]);
  }
  finalize_class_set(ds);
  return ds;
}

TaskStream load_idx_stream(const std::string& image_path, const std::string& label_path,
                           int tasks, int classes_per_task) {
  const LabeledDataset all = load_idx_pair(image_path, label_path);
  // 80/20 split per class, preserving file order
  LabeledDataset train;
  LabeledDataset test;
  for (const auto& [label, idx] : indices_by_class(all)) {
    const int n_test = std::max<int>(1, static_cast<int>(idx.size()) / 5);
    const int n_train = static_cast<int>(idx.size()) - n_test;
    append_samples(train, all, std::vector<int>(idx.begin(), idx.begin() + n_train));
    append_samples(test, all, std::vector<int>(idx.begin() + n_train, idx.end()));
  }
  finalize_class_set(train);
  finalize_class_set(test);
  return partition_into_tasks(train, test, tasks, classes_per_task);
}

TaskStream load_idx_stream(const std::string& train_images, const std::string& train_labels,
                           const std::string& test_images, const std::string& test_labels,
                           int tasks, int classes_per_task) {
  return partition_into_tasks(load_idx_pair(train_images, train_labels),
                              load_idx_pair(test_images, test_labels), tasks, classes_per_task);
}

}  // namespace nclab
