#include "nclab/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nclab {
namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      double value;
      try {
        value = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("bad numeric cell '" + cell + "' in " + path.string());
      }
      if (pos != cell.size()) {
        throw std::runtime_error("bad numeric cell '" + cell + "' in " + path.string());
      }
      row.push_back(value);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

const Json& require_key(const Json& j, const std::string& key) {
  if (!j.contains(key)) throw std::invalid_argument("config: missing required field '" + key + "'");
  return j.at(key);
}

void reject_unknown_keys(const Json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config: unknown field '" + key + "' in " + where);
    }
  }
}

}  // namespace

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out = open_out(path);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const fs::path& path) {
  const auto rows = read_csv_rows(path);
  if (rows.empty()) throw std::runtime_error("empty matrix file " + path.string());
  const std::size_t cols = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != cols) {
      throw std::runtime_error("ragged rows in matrix file " + path.string());
    }
  }
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

void save_etf(const fs::path& dir, const EtfTarget& etf) {
  fs::create_directories(dir);
  write_matrix_csv(dir / "vertices.csv", etf.vertices);
  write_matrix_csv(dir / "basis.csv", etf.basis);
  Json header;
  header["dim"] = etf.dim;
  header["num_classes"] = etf.num_classes;
  header["class_map"] = etf.class_labels;
  open_out(dir / "etf.json") << header.dump(2) << '\n';
}

EtfTarget load_etf(const fs::path& dir) {
  EtfTarget etf;
  Json header;
  try {
    open_in(dir / "etf.json") >> header;
  } catch (const Json::exception& e) {
    throw std::runtime_error("bad etf.json in " + dir.string() + ": " + e.what());
  }
  etf.dim = header.at("dim").get<int>();
  etf.num_classes = header.at("num_classes").get<int>();
  etf.class_labels = header.at("class_map").get<std::vector<int>>();
  etf.vertices = read_matrix_csv(dir / "vertices.csv");
  etf.basis = read_matrix_csv(dir / "basis.csv");
  if (etf.vertices.rows() != etf.dim || etf.vertices.cols() != etf.num_classes ||
      etf.basis.rows() != etf.dim || etf.basis.cols() != etf.num_classes ||
      static_cast<int>(etf.class_labels.size()) != etf.num_classes) {
    throw std::runtime_error("etf files in " + dir.string() + " disagree with the header");
  }
  return etf;
}

void save_model(const fs::path& dir, const FeatureModel& m) {
  fs::create_directories(dir);
  Json header;
  header["layer_dims"] = m.layer_dims;
  header["activation"] = "leaky_relu";
  header["leaky_slope"] = FeatureModel::kLeakySlope;
  header["k_seen"] = m.k_seen();
  open_out(dir / "model.json") << header.dump(2) << '\n';
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    write_matrix_csv(dir / ("layer" + std::to_string(l) + "_weight.csv"), m.weights[l]);
    write_matrix_csv(dir / ("layer" + std::to_string(l) + "_bias.csv"), m.biases[l]);
  }
  write_matrix_csv(dir / "head_weight.csv", m.head_weights);
  write_matrix_csv(dir / "head_bias.csv", m.head_bias);
}

FeatureModel load_model(const fs::path& dir) {
  Json header;
  try {
    open_in(dir / "model.json") >> header;
  } catch (const Json::exception& e) {
    throw std::runtime_error("bad model.json in " + dir.string() + ": " + e.what());
  }
  FeatureModel m;
  m.layer_dims = header.at("layer_dims").get<std::vector<int>>();
  if (m.layer_dims.size() < 2) throw std::runtime_error("model.json: bad layer_dims");
  const int k_seen = header.at("k_seen").get<int>();
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    Matrix w = read_matrix_csv(dir / ("layer" + std::to_string(l) + "_weight.csv"));
    Matrix b = read_matrix_csv(dir / ("layer" + std::to_string(l) + "_bias.csv"));
    if (w.rows() != m.layer_dims[l + 1] || w.cols() != m.layer_dims[l] || b.cols() != 1 ||
        b.rows() != m.layer_dims[l + 1]) {
      throw std::runtime_error("checkpoint layer " + std::to_string(l) + " has wrong shape");
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector(b.col(0)));
  }
  m.head_weights = read_matrix_csv(dir / "head_weight.csv");
  Matrix hb = read_matrix_csv(dir / "head_bias.csv");
  if (m.head_weights.rows() != k_seen || m.head_weights.cols() != m.layer_dims.back() ||
      hb.cols() != 1 || hb.rows() != k_seen) {
    throw std::runtime_error("checkpoint head has wrong shape");
  }
  m.head_bias = hb.col(0);
  return m;
}

void save_retained_means(const fs::path& path, const std::vector<int>& labels,
                         const std::vector<Vector>& means) {
  if (labels.size() != means.size()) {
    throw std::invalid_argument("save_retained_means: label/mean count mismatch");
  }
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i];
    for (int j = 0; j < means[i].size(); ++j) out << ',' << format_double(means[i](j));
    out << '\n';
  }
}

std::pair<std::vector<int>, std::vector<Vector>> load_retained_means(const fs::path& path) {
  const auto rows = read_csv_rows(path);
  std::vector<int> labels;
  std::vector<Vector> means;
  for (const auto& row : rows) {
    if (row.size() < 2) throw std::runtime_error("bad retained means row in " + path.string());
    labels.push_back(static_cast<int>(row.front()));
    Vector mean(row.size() - 1);
    for (std::size_t j = 1; j < row.size(); ++j) mean(static_cast<int>(j - 1)) = row[j];
    means.push_back(std::move(mean));
  }
  return {labels, means};
}

Json nc_report_to_json(const NcReport& report) {
  Json j;
  j["class_variability"] = report.class_variability;
  j["pair_cos_gap_mean"] = report.pair_cos_gap_mean;
  j["pair_cos_gap_mean_abs"] = report.pair_cos_gap_mean_abs;
  j["within_task_cos_std"] = report.within_task_cos_std;
  j["retention_cosine"] = report.retention_cosine;
  j["retention_cosine_mean"] =
      report.retention_cosine_mean ? Json(*report.retention_cosine_mean) : Json(nullptr);
  j["cross_class_vertex_cos"] = report.cross_class_vertex_cos;
  j["cross_class_vertex_cos_within"] = report.cross_class_vertex_cos_within;
  j["cross_class_head_cos"] =
      report.cross_class_head_cos ? Json(*report.cross_class_head_cos) : Json(nullptr);
  j["cross_class_head_cos_within"] =
      report.cross_class_head_cos_within ? Json(*report.cross_class_head_cos_within) : Json(nullptr);
  j["global_mean"] = vector_to_json(report.global_mean);
  return j;
}

Json accuracy_to_json(const AccuracyMatrix& acc) {
  Json rows = Json::array();
  for (const auto& row : acc.rows) rows.push_back(row);
  return rows;
}

std::optional<Ablation> ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::kNone;
  if (name == "no_ce") return Ablation::kNoCe;
  if (name == "no_align") return Ablation::kNoAlign;
  if (name == "no_distill") return Ablation::kNoDistill;
  if (name == "predefined_base_etf") return Ablation::kPredefinedBaseEtf;
  if (name == "predefined_global_etf") return Ablation::kPredefinedGlobalEtf;
  if (name == "linear_classifier_inference") return Ablation::kLinearClassifierInference;
  return std::nullopt;
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kNoCe: return "no_ce";
    case Ablation::kNoAlign: return "no_align";
    case Ablation::kNoDistill: return "no_distill";
    case Ablation::kPredefinedBaseEtf: return "predefined_base_etf";
    case Ablation::kPredefinedGlobalEtf: return "predefined_global_etf";
    case Ablation::kLinearClassifierInference: return "linear_classifier_inference";
  }
  return "none";
}

ExperimentConfig parse_config(const Json& j) {
  reject_unknown_keys(j, {"seed", "task_count", "classes_per_task", "epochs_per_task",
                          "batch_size", "learning_rate", "lambda1", "lambda2", "momentum",
                          "weight_decay", "buffer_capacity", "ce_scope", "scenario", "ablation",
                          "dataset", "hidden_dims", "feature_dim", "diagnostics_data"},
                     "top level");
  ExperimentConfig c;
  c.seed = require_key(j, "seed").get<std::uint64_t>();
  c.task_count = require_key(j, "task_count").get<int>();
  c.classes_per_task = require_key(j, "classes_per_task").get<int>();
  c.epochs_per_task = require_key(j, "epochs_per_task").get<int>();
  c.batch_size = require_key(j, "batch_size").get<int>();
  c.learning_rate = require_key(j, "learning_rate").get<double>();
  c.lambda1 = require_key(j, "lambda1").get<double>();
  c.lambda2 = require_key(j, "lambda2").get<double>();
  c.buffer_capacity = require_key(j, "buffer_capacity").get<int>();
  c.momentum = j.value("momentum", 0.0);
  c.weight_decay = j.value("weight_decay", 0.0);

  const std::string scope = require_key(j, "ce_scope").get<std::string>();
  if (scope == "all_seen") {
    c.ce_scope = CeScope::kAllSeen;
  } else if (scope == "current_task") {
    c.ce_scope = CeScope::kCurrentTask;
  } else {
    throw std::invalid_argument("config: ce_scope must be all_seen or current_task");
  }

  const std::string scenario = require_key(j, "scenario").get<std::string>();
  if (scenario == "class_il") {
    c.scenario = Scenario::kClassIl;
  } else if (scenario == "task_il") {
    c.scenario = Scenario::kTaskIl;
  } else {
    throw std::invalid_argument("config: scenario must be class_il or task_il");
  }

  const std::string ablation = j.value("ablation", "none");
  const auto parsed = ablation_from_name(ablation);
  if (!parsed) throw std::invalid_argument("config: unknown ablation '" + ablation + "'");
  c.ablation = *parsed;

  if (j.contains("diagnostics_data")) {
    const std::string diag = j.at("diagnostics_data").get<std::string>();
    if (diag == "test") {
      c.diagnostics_data = DiagnosticsData::kTest;
    } else if (diag == "train") {
      c.diagnostics_data = DiagnosticsData::kTrain;
    } else {
      throw std::invalid_argument("config: diagnostics_data must be test or train");
    }
  }

  const Json& ds = require_key(j, "dataset");
  const std::string kind = require_key(ds, "type").get<std::string>();
  if (kind == "synthetic") {
    reject_unknown_keys(ds, {"type", "samples_per_class", "input_dim", "cluster_std", "seed"},
                        "dataset");
    c.dataset.kind = DatasetSpec::Kind::kSynthetic;
    c.dataset.synthetic.samples_per_class = require_key(ds, "samples_per_class").get<int>();
    c.dataset.synthetic.input_dim = require_key(ds, "input_dim").get<int>();
    c.dataset.synthetic.cluster_std = require_key(ds, "cluster_std").get<double>();
    c.dataset.synthetic.seed = ds.value("seed", c.seed);
    c.feature_dim = 16;
  } else if (kind == "idx") {
    reject_unknown_keys(ds, {"type", "images", "labels", "test_images", "test_labels"}, "dataset");
    c.dataset.kind = DatasetSpec::Kind::kIdx;
    c.dataset.idx.images = require_key(ds, "images").get<std::string>();
    c.dataset.idx.labels = require_key(ds, "labels").get<std::string>();
    c.dataset.idx.test_images = ds.value("test_images", "");
    c.dataset.idx.test_labels = ds.value("test_labels", "");
    if (c.dataset.idx.test_images.empty() != c.dataset.idx.test_labels.empty()) {
      throw std::invalid_argument("config: test_images and test_labels must be given together");
    }
    c.feature_dim = 32;
  } else {
    throw std::invalid_argument("config: dataset type must be synthetic or idx");
  }

  if (j.contains("hidden_dims")) c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<int>();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  Json j;
  try {
    open_in(path) >> j;
  } catch (const Json::exception& e) {
    throw std::invalid_argument("config: cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["task_count"] = c.task_count;
  j["classes_per_task"] = c.classes_per_task;
  j["epochs_per_task"] = c.epochs_per_task;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["buffer_capacity"] = c.buffer_capacity;
  j["ce_scope"] = c.ce_scope == CeScope::kAllSeen ? "all_seen" : "current_task";
  j["scenario"] = c.scenario == Scenario::kClassIl ? "class_il" : "task_il";
  j["ablation"] = ablation_name(c.ablation);
  j["diagnostics_data"] = c.diagnostics_data == DiagnosticsData::kTest ? "test" : "train";
  Json ds;
  if (c.dataset.kind == DatasetSpec::Kind::kSynthetic) {
    ds["type"] = "synthetic";
    ds["samples_per_class"] = c.dataset.synthetic.samples_per_class;
    ds["input_dim"] = c.dataset.synthetic.input_dim;
    ds["cluster_std"] = c.dataset.synthetic.cluster_std;
    ds["seed"] = c.dataset.synthetic.seed;
  } else {
    ds["type"] = "idx";
    ds["images"] = c.dataset.idx.images;
    ds["labels"] = c.dataset.idx.labels;
    if (!c.dataset.idx.test_images.empty()) {
      ds["test_images"] = c.dataset.idx.test_images;
      ds["test_labels"] = c.dataset.idx.test_labels;
    }
  }
  j["dataset"] = ds;
  j["hidden_dims"] = c.hidden_dims;
  j["feature_dim"] = c.feature_dim;
  return j;
}

void write_results(const fs::path& run_dir, const AccuracyMatrix& acc,
                   const std::vector<NcReport>& reports, const ExperimentConfig& config,
                   double faa_value, std::optional<double> ff_value, double wall_seconds) {
  fs::create_directories(run_dir);

  {
    std::ofstream out = open_out(run_dir / "accuracy.csv");
    for (const auto& row : acc.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) out << ',';
        out << format_double(row[i]);
      }
      out << '\n';
    }
  }

  {
    std::ofstream out = open_out(run_dir / "metrics.jsonl");
    for (std::size_t t = 0; t < reports.size(); ++t) {
      Json line;
      line["task"] = t;
      line["accuracies"] = acc.rows.at(t);
      line["nc"] = nc_report_to_json(reports[t]);
      out << line.dump() << '\n';
    }
  }

  {
    Json summary;
    summary["faa"] = faa_value;
    summary["ff"] = ff_value ? Json(*ff_value) : Json(nullptr);
    summary["task_count"] = acc.task_count();
    summary["ablation"] = ablation_name(config.ablation);
    summary["wall_time_seconds"] = wall_seconds;
    summary["config"] = config_to_json(config);
    open_out(run_dir / "summary.json") << summary.dump(2) << '\n';
  }

  open_out(run_dir / "config.json") << config_to_json(config).dump(2) << '\n';
}

AccuracyMatrix read_accuracy_csv(const fs::path& path) {
  AccuracyMatrix acc;
  acc.rows = read_csv_rows(path);
  for (std::size_t t = 0; t < acc.rows.size(); ++t) {
    if (acc.rows[t].size() != t + 1) {
      throw std::runtime_error("accuracy.csv is not lower-triangular at row " + std::to_string(t));
    }
  }
  return acc;
}

}  // namespace nclab
