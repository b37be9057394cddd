#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nclab/engine.hpp"
#include "nclab/etf.hpp"
#include "nclab/metrics.hpp"
#include "nclab/model.hpp"

namespace nclab {

using Json = nlohmann::ordered_json;

/// CSV interchange: one row per line, comma-separated, 17 significant digits
/// (round-trip exact for 64-bit reals).
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// ETF export: vertices.csv + basis.csv + etf.json (dim, num_classes,
/// class_map in column order).
void save_etf(const std::filesystem::path& dir, const EtfTarget& etf);
EtfTarget load_etf(const std::filesystem::path& dir);

/// Model checkpoint: model.json header plus one CSV block per parameter.
void save_model(const std::filesystem::path& dir, const FeatureModel& m);
FeatureModel load_model(const std::filesystem::path& dir);

/// Retained class means, one "label,v0,v1,..." row per class.
void save_retained_means(const std::filesystem::path& path, const std::vector<int>& labels,
                         const std::vector<Vector>& means);
std::pair<std::vector<int>, std::vector<Vector>> load_retained_means(
    const std::filesystem::path& path);

Json nc_report_to_json(const NcReport& report);
Json accuracy_to_json(const AccuracyMatrix& acc);

/// Strict config parsing: all fields required except the ones with documented
/// defaults; unknown keys are rejected.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
Json config_to_json(const ExperimentConfig& config);

std::optional<Ablation> ablation_from_name(const std::string& name);
std::string ablation_name(Ablation a);

/// Run outputs: accuracy.csv (ragged lower-triangular rows), metrics.jsonl
/// (one object per task checkpoint), summary.json (faa/ff/config echo/wall
/// time) and config.json (exact resolved config).
void write_results(const std::filesystem::path& run_dir, const AccuracyMatrix& acc,
                   const std::vector<NcReport>& reports, const ExperimentConfig& config,
                   double faa_value, std::optional<double> ff_value, double wall_seconds);

AccuracyMatrix read_accuracy_csv(const std::filesystem::path& path);

}  // namespace nclab
