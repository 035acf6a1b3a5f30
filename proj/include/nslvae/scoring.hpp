#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nslvae/dataset.hpp"
#include "nslvae/layout.hpp"
#include "nslvae/model.hpp"

namespace nslvae::scoring {

// mean: z = mu(x). sampled: z = mu + sigma * noise from a seeded stream.
enum class ProjectionMode { mean, sampled };

std::string_view to_string(ProjectionMode mode);
ProjectionMode projection_from_string(std::string_view name);

inline const std::vector<std::size_t> kDefaultKValues{1,    100,  150,  200,  250,  300, 400,
                                                      500,  1000, 2000, 3000, 4000, 5000};

struct DetectorConfig {
  std::vector<std::size_t> k_values = kDefaultKValues;
  std::optional<double> threshold;
  ProjectionMode projection = ProjectionMode::mean;
  std::uint64_t noise_seed = 0;

  // k values positive, strictly increasing, and at most index_rows.
  void validate(std::size_t index_rows) const;
};

// Latent projections of x, one row per input row. In sampled mode, noise is
// drawn row by row from Rng(noise_seed).
Matrix project(const model::BetaVae& model, const Matrix& x, ProjectionMode mode,
               std::uint64_t noise_seed);

// Per-sample reconstruction loss (the three components with n = 1).
double rec_score(const model::BetaVae& model, std::span<const double> x, ProjectionMode mode,
                 std::uint64_t noise_seed);
std::vector<double> rec_scores(const model::BetaVae& model, const Matrix& x, ProjectionMode mode,
                               std::uint64_t noise_seed);

class LatentIndex {
 public:
  LatentIndex(Matrix rows, ProjectionMode mode);

  static LatentIndex build(const model::BetaVae& model, const Matrix& x_train, ProjectionMode mode,
                           std::uint64_t noise_seed);

  std::size_t size() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
  const Matrix& rows() const { return rows_; }
  const Matrix& columns() const { return columns_; }
  ProjectionMode mode() const { return mode_; }
  std::string_view backend() const { return "exact-brute-force"; }

  // The k_max smallest Euclidean distances to index rows, ascending.
  std::vector<double> knn_distances(std::span<const double> z, std::size_t k_max) const;

 private:
  Matrix rows_;
  Matrix columns_;  // dim x size, one latent coordinate per row
  ProjectionMode mode_;
};

// Mean distance to the k nearest rows for every k, from one k_max query.
std::vector<double> zk_scores(const LatentIndex& index, std::span<const double> z,
                              std::span<const std::size_t> k_values);
// Prefix means of already sorted distances.
std::vector<double> prefix_means(std::span<const double> sorted_distances,
                                 std::span<const std::size_t> k_values);

enum class Verdict { normal, anomaly };

// Anomaly iff score > tau.
inline Verdict classify(double score, double tau) {
  return score > tau ? Verdict::anomaly : Verdict::normal;
}

struct ScoreRecord {
  std::size_t id = 0;
  std::string split;  // "test" or "attack"
  dataset::Source source = dataset::Source::test_file;
  std::string label;
  dataset::AttackCategory category = dataset::AttackCategory::normal;
  double rec = 0.0;
  std::vector<double> zk;  // aligned with ScoreTable::k_values
};

struct ScoreTable {
  double beta = 0.0;
  std::uint64_t seed = 0;
  ProjectionMode projection = ProjectionMode::mean;
  std::vector<std::size_t> k_values;
  std::vector<ScoreRecord> rows;
};

// Scores X_test then X_attack with both detectors. Work is split across
// `threads` workers; output order follows input order.
ScoreTable score_split(const model::BetaVae& model, const dataset::EncodedSplit& split,
                       const DetectorConfig& config, std::size_t threads = 0);

// Tab-separated: '#'-prefixed metadata lines (beta, seed, projection, k),
// a header row, then one row per sample.
void write_scores(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_scores(const std::filesystem::path& path);

}  // namespace nslvae::scoring
