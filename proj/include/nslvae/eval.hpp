#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslvae/dataset.hpp"
#include "nslvae/scoring.hpp"

namespace nslvae::eval {

struct LabeledScores {
  std::vector<double> score;
  std::vector<std::uint8_t> is_anomaly;
  std::vector<dataset::AttackCategory> category;

  std::size_t size() const { return score.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t fp = 0;
  std::size_t tp = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auroc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// One point per distinct score (predicted anomaly iff score > threshold),
// plus (0,0). Throws EvalError unless both classes are present.
RocCurve roc_curve(const LabeledScores& ls);

// Mann-Whitney statistic with ties counted as one half.
double auroc(const LabeledScores& ls);

double trapezoid_area(std::span<const RocPoint> points);
// Trapezoid over the integer (fp, tp) counts, divided once at the end.
double trapezoid_area_exact(const RocCurve& curve);

using Warn = std::function<void(const std::string&)>;

// Per attack category: positives are that category's attacks, negatives are
// every normal. Categories without attacks are skipped with a warning.
std::map<dataset::AttackCategory, RocCurve> per_category_eval(const LabeledScores& ls,
                                                              const Warn& warn = {});

struct DetectorMetrics {
  std::string name;  // "rec" or "z<k>"
  RocCurve global;
  std::map<dataset::AttackCategory, RocCurve> per_category;
};

struct Metrics {
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<DetectorMetrics> detectors;  // rec first, then one per k
};

LabeledScores labeled_scores(const scoring::ScoreTable& table, std::size_t detector);
Metrics evaluate(const scoring::ScoreTable& table, const Warn& warn = {});

nlohmann::json to_json(const Metrics& metrics);

// Writes metrics.json, one roc_<detector>_<scope>.tsv per curve and
// joint_scores.tsv with (rec, z_<joint_k>, category) triples.
void write_eval_outputs(const std::filesystem::path& dir, const scoring::ScoreTable& table,
                        const Metrics& metrics, std::size_t joint_k);

}  // namespace nslvae::eval
