#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslvae/dataset.hpp"
#include "nslvae/model.hpp"
#include "nslvae/scoring.hpp"

namespace nslvae::experiment {

// Bumped whenever a change alters cell outputs; part of every cache key.
inline constexpr const char* kCodeVersion = "nslvae-cell-1";

struct SweepConfig {
  std::vector<double> betas{0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5};
  std::vector<std::size_t> k_values = scoring::kDefaultKValues;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};

  // Either raw files or a preprocessed archive.
  std::filesystem::path train_file;
  std::filesystem::path test_file;
  std::filesystem::path archive;
  std::filesystem::path cache_dir = "sweep-cache";
  std::filesystem::path out_dir = "sweep-out";

  // Model template; beta and seed are set per cell.
  model::ModelConfig model;
  scoring::ProjectionMode projection = scoring::ProjectionMode::mean;
  std::size_t workers = 1;
  std::size_t score_threads = 0;

  void validate() const;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SweepConfig& config);

struct CellResult {
  double beta = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double rec_auroc = 0.0;
  std::vector<double> zk_auroc;  // aligned with SweepResult::k_values
  std::string key;
  std::string checkpoint_digest;
  bool from_cache = false;
  bool trained = false;
};

// Column c < k_values.size() is Z_k; the last column is L_rec.
struct BetaRow {
  double beta = 0.0;
  std::size_t seeds_ok = 0;
  std::vector<double> mean_auroc;  // empty when no seed succeeded
  std::optional<std::size_t> best_column;
  std::vector<bool> beats_rec;  // per Z_k column
};

struct SweepResult {
  std::vector<double> betas;
  std::vector<std::size_t> k_values;
  std::vector<std::uint64_t> seeds;
  std::string dataset_digest;
  std::vector<CellResult> cells;  // beta-major, seed-minor
  std::vector<BetaRow> rows;
  std::size_t trainings_run = 0;

  std::size_t columns() const { return k_values.size() + 1; }
  const CellResult* cell(double beta, std::uint64_t seed) const;
};

nlohmann::json to_json(const SweepResult& result);
SweepResult sweep_result_from_json(const nlohmann::json& j);

// Means over successful seeds plus best-per-row and beats-rec markers.
void aggregate(SweepResult& result);

// Stable content key of one cell.
std::string cell_key(const std::string& dataset_digest, const SweepConfig& config, double beta,
                     std::uint64_t seed);

using Log = std::function<void(const std::string&)>;

// Trains, scores and evaluates one (beta, seed) cell; artifacts go to
// cache_dir/<key>/. A cell whose result file is present is loaded instead.
// Failures are reported in the result, not thrown.
CellResult run_cell(const dataset::EncodedSplit& split, const SweepConfig& config, double beta,
                    std::uint64_t seed, const Log& log = {});

dataset::EncodedSplit load_or_build_split(const SweepConfig& config);

SweepResult run_sweep(const SweepConfig& config, const Log& log = {});

enum class ReportFormat { table_text, delimited, json, all };
ReportFormat report_format_from_string(std::string_view name);

// table.txt: beta x detector grid with **best** and _beats-rec_ markers.
// table.tsv: full-precision means with marker columns.
// result.json, fig1.tsv: (beta, k, mean AUROC) triples.
std::vector<std::filesystem::path> emit_report(const SweepResult& result, ReportFormat format,
                                               const std::filesystem::path& out_dir);

std::string format_table(const SweepResult& result);

}  // namespace nslvae::experiment
