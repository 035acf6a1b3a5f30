#include "nslvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "nslvae/error.hpp"

namespace nslvae::eval {

using dataset::AttackCategory;

std::size_t LabeledScores::positives() const {
  return static_cast<std::size_t>(std::count_if(is_anomaly.begin(), is_anomaly.end(), [](auto b) { return b != 0; }));
}

namespace {

void check(const LabeledScores& ls) {
  if (ls.score.size() != ls.is_anomaly.size())
    throw EvalError("labeled scores: score and label lengths differ");
  for (const double s : ls.score)
    if (std::isnan(s)) throw EvalError("labeled scores: NaN score");
  const auto p = ls.positives();
  if (p == 0 || p == ls.size()) throw EvalError("ROC needs at least one anomaly and one normal sample");
}

}  // namespace

RocCurve roc_curve(const LabeledScores& ls) {
  check(ls);
  std::vector<std::size_t> order(ls.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ls.score[a] > ls.score[b]; });

  RocCurve curve;
  curve.positives = ls.positives();
  curve.negatives = ls.size() - curve.positives;
  const double P = static_cast<double>(curve.positives);
  const double N = static_cast<double>(curve.negatives);
  curve.points.push_back({0.0, 0.0, 0, 0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    // All samples tied at this score flip together as the threshold passes it.
    const double s = ls.score[order[i]];
    for (; i < order.size() && ls.score[order[i]] == s; ++i) {
      if (ls.is_anomaly[order[i]]) ++tp;
      else ++fp;
    }
    curve.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P, fp, tp});
  }
  curve.auroc = auroc(ls);
  return curve;
}

double auroc(const LabeledScores& ls) {
  check(ls);
  std::vector<std::size_t> order(ls.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ls.score[a] < ls.score[b]; });
  // Doubled mid-ranks keep the rank sum integral.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && ls.score[order[j]] == ls.score[order[i]]) ++j;
    const std::uint64_t mid2 = static_cast<std::uint64_t>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (ls.is_anomaly[order[t]]) rank_sum2 += mid2;
    i = j;
  }
  const std::uint64_t p = ls.positives();
  const std::uint64_t n = ls.size() - p;
  const std::uint64_t u2 = rank_sum2 - p * (p + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  return area;
}

double trapezoid_area_exact(const RocCurve& curve) {
  if (curve.positives == 0 || curve.negatives == 0) throw EvalError("trapezoid: curve needs both classes");
  std::uint64_t twice = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    twice += static_cast<std::uint64_t>(curve.points[i].fp - curve.points[i - 1].fp) *
             static_cast<std::uint64_t>(curve.points[i].tp + curve.points[i - 1].tp);
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(curve.positives) * static_cast<double>(curve.negatives));
}

std::map<AttackCategory, RocCurve> per_category_eval(const LabeledScores& ls, const Warn& warn) {
  if (ls.category.size() != ls.size()) throw EvalError("per-category eval needs a category per sample");
  std::map<AttackCategory, RocCurve> out;
  for (const auto c : dataset::kAttackCategories) {
    LabeledScores sub;
    for (std::size_t i = 0; i < ls.size(); ++i) {
      if (ls.category[i] == AttackCategory::normal || ls.category[i] == c) {
        sub.score.push_back(ls.score[i]);
        sub.is_anomaly.push_back(ls.category[i] == c ? 1 : 0);
        sub.category.push_back(ls.category[i]);
      }
    }
    const auto pos = sub.positives();
    if (pos == 0) {
      if (warn) warn(fmt::format("no {} samples; category skipped", dataset::to_string(c)));
      continue;
    }
    if (pos == sub.size()) throw EvalError("per-category eval: no normal samples");
    out.emplace(c, roc_curve(sub));
  }
  return out;
}

LabeledScores labeled_scores(const scoring::ScoreTable& table, std::size_t detector) {
  if (detector > table.k_values.size()) throw EvalError("detector index out of range");
  LabeledScores ls;
  ls.score.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    ls.score.push_back(detector == 0 ? r.rec : r.zk.at(detector - 1));
    ls.is_anomaly.push_back(r.category == AttackCategory::normal ? 0 : 1);
    ls.category.push_back(r.category);
  }
  return ls;
}

Metrics evaluate(const scoring::ScoreTable& table, const Warn& warn) {
  Metrics m;
  m.beta = table.beta;
  m.seed = table.seed;
  for (std::size_t d = 0; d <= table.k_values.size(); ++d) {
    const auto ls = labeled_scores(table, d);
    DetectorMetrics dm;
    dm.name = d == 0 ? "rec" : fmt::format("z{}", table.k_values[d - 1]);
    dm.global = roc_curve(ls);
    dm.per_category = per_category_eval(ls, d == 0 ? warn : Warn{});
    m.detectors.push_back(std::move(dm));
  }
  return m;
}

nlohmann::json to_json(const Metrics& metrics) {
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : metrics.detectors) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [c, curve] : d.per_category)
      per[std::string(dataset::to_string(c))] = {{"auroc", curve.auroc},
                                                 {"positives", curve.positives},
                                                 {"negatives", curve.negatives},
                                                 {"points", curve.points.size()}};
    dets.push_back({{"name", d.name},
                    {"auroc", d.global.auroc},
                    {"positives", d.global.positives},
                    {"negatives", d.global.negatives},
                    {"points", d.global.points.size()},
                    {"per_category", per}});
  }
  return {{"beta", metrics.beta}, {"seed", metrics.seed}, {"detectors", dets}};
}

namespace {

void write_roc(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << fmt::format("# auroc={}\nfpr\ttpr\n", curve.auroc);
  for (const auto& p : curve.points) out << fmt::format("{}\t{}\n", p.fpr, p.tpr);
}

}  // namespace

void write_eval_outputs(const std::filesystem::path& dir, const scoring::ScoreTable& table,
                        const Metrics& metrics, std::size_t joint_k) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.json");
    if (!out) throw IoError("cannot write metrics.json");
    out << to_json(metrics).dump(2) << '\n';
  }
  for (const auto& d : metrics.detectors) {
    write_roc(dir / fmt::format("roc_{}_global.tsv", d.name), d.global);
    for (const auto& [c, curve] : d.per_category)
      write_roc(dir / fmt::format("roc_{}_{}.tsv", d.name, dataset::to_string(c)), curve);
  }
  const auto it = std::find(table.k_values.begin(), table.k_values.end(), joint_k);
  if (it == table.k_values.end()) throw UsageError(fmt::format("joint k={} not among scored k values", joint_k));
  const auto col = static_cast<std::size_t>(it - table.k_values.begin());
  std::ofstream out(dir / "joint_scores.tsv");
  if (!out) throw IoError("cannot write joint_scores.tsv");
  out << fmt::format("id\tsplit\tcategory\trec\tz{}\n", joint_k);
  for (const auto& r : table.rows)
    out << fmt::format("{}\t{}\t{}\t{}\t{}\n", r.id, r.split, dataset::to_string(r.category), r.rec, r.zk[col]);
}

}  // namespace nslvae::eval
