#include "nslvae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "nslvae/digest.hpp"
#include "nslvae/error.hpp"
#include "nslvae/eval.hpp"

namespace nslvae::experiment {

namespace fs = std::filesystem;

void SweepConfig::validate() const {
  if (betas.empty()) throw UsageError("sweep: beta list is empty");
  if (seeds.empty()) throw UsageError("sweep: seed list is empty");
  if (k_values.empty()) throw UsageError("sweep: k list is empty");
  for (const double b : betas)
    if (!(b >= 0.0) || !std::isfinite(b)) throw UsageError("sweep: beta values must be finite and >= 0");
  if (std::set<double>(betas.begin(), betas.end()).size() != betas.size())
    throw UsageError("sweep: beta values must be distinct");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw UsageError("sweep: seeds must be distinct");
  scoring::DetectorConfig det;
  det.k_values = k_values;
  det.validate(std::numeric_limits<std::size_t>::max());
  if (archive.empty() && (train_file.empty() || test_file.empty()))
    throw UsageError("sweep: provide either an archive or both train_file and test_file");
  if (workers == 0) throw UsageError("sweep: workers must be positive");
}

SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  SweepConfig c;
  c.betas = j.value("betas", c.betas);
  c.k_values = j.value("k_values", c.k_values);
  c.seeds = j.value("seeds", c.seeds);
  c.train_file = j.value("train_file", std::string{});
  c.test_file = j.value("test_file", std::string{});
  c.archive = j.value("archive", std::string{});
  c.cache_dir = j.value("cache_dir", c.cache_dir.string());
  c.out_dir = j.value("out_dir", c.out_dir.string());
  if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
  c.projection = scoring::projection_from_string(j.value("projection", std::string("mean")));
  c.workers = j.value("workers", c.workers);
  c.score_threads = j.value("score_threads", c.score_threads);
  return c;
}

nlohmann::json to_json(const SweepConfig& c) {
  return {{"betas", c.betas},
          {"k_values", c.k_values},
          {"seeds", c.seeds},
          {"train_file", c.train_file.string()},
          {"test_file", c.test_file.string()},
          {"archive", c.archive.string()},
          {"cache_dir", c.cache_dir.string()},
          {"out_dir", c.out_dir.string()},
          {"model", c.model},
          {"projection", std::string(scoring::to_string(c.projection))},
          {"workers", c.workers},
          {"score_threads", c.score_threads}};
}

const CellResult* SweepResult::cell(double beta, std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.beta == beta && c.seed == seed) return &c;
  return nullptr;
}

namespace {

model::ModelConfig cell_model_config(const SweepConfig& config, const Layout& layout, double beta,
                                     std::uint64_t seed) {
  model::ModelConfig m = config.model;
  m.input_width = layout.width();
  m.beta = beta;
  m.seed = seed;
  return m;
}

nlohmann::json cell_to_json(const CellResult& c) {
  return {{"beta", c.beta},           {"seed", c.seed},
          {"ok", c.ok},               {"error", c.error},
          {"rec_auroc", c.rec_auroc}, {"zk_auroc", c.zk_auroc},
          {"key", c.key},             {"checkpoint_digest", c.checkpoint_digest}};
}

CellResult cell_from_json(const nlohmann::json& j) {
  CellResult c;
  c.beta = j.at("beta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ok = j.at("ok").get<bool>();
  c.error = j.value("error", "");
  c.rec_auroc = j.value("rec_auroc", 0.0);
  c.zk_auroc = j.value("zk_auroc", std::vector<double>{});
  c.key = j.value("key", "");
  c.checkpoint_digest = j.value("checkpoint_digest", "");
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp));
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return nlohmann::json::parse(in);
}

}  // namespace

std::string cell_key(const std::string& dataset_digest, const SweepConfig& config, double beta,
                     std::uint64_t seed) {
  model::ModelConfig m = config.model;
  m.input_width = 0;  // implied by the dataset digest
  m.beta = beta;
  m.seed = seed;
  const nlohmann::json key = {{"code_version", kCodeVersion},
                              {"dataset", dataset_digest},
                              {"model", m},
                              {"k_values", config.k_values},
                              {"projection", std::string(scoring::to_string(config.projection))}};
  return sha256_hex(key.dump()).substr(0, 24);
}

CellResult run_cell(const dataset::EncodedSplit& split, const SweepConfig& config, double beta,
                    std::uint64_t seed, const Log& log) {
  CellResult cell;
  cell.beta = beta;
  cell.seed = seed;
  cell.key = cell_key(split.digest, config, beta, seed);
  const fs::path dir = config.cache_dir / cell.key;
  const fs::path result_file = dir / "cell.json";

  if (fs::exists(result_file)) {
    try {
      const auto j = read_json(result_file);
      if (j.value("key", "") == cell.key && j.value("dataset_digest", "") == split.digest) {
        CellResult cached = cell_from_json(j);
        cached.from_cache = true;
        if (log) log(fmt::format("cell beta={} seed={}: cached ({})", beta, seed, cell.key));
        return cached;
      }
    } catch (const std::exception& e) {
      if (log) log(fmt::format("cell beta={} seed={}: ignoring unreadable cache entry: {}", beta, seed, e.what()));
    }
  }

  try {
    const auto mcfg = cell_model_config(config, split.layout, beta, seed);
    if (log) log(fmt::format("cell beta={} seed={}: training {} epochs", beta, seed, mcfg.epochs));
    auto trained = model::train(split.train.x, split.layout, mcfg);
    cell.trained = true;
    model::save_checkpoint(dir / "checkpoint.bin", trained.model, split.manifest);
    cell.checkpoint_digest = trained.report.digest;

    scoring::DetectorConfig det;
    det.k_values = config.k_values;
    det.projection = config.projection;
    det.noise_seed = seed;
    const auto table = scoring::score_split(trained.model, split, det, config.score_threads);
    scoring::write_scores(dir / "scores.tsv", table);

    const auto metrics = eval::evaluate(table, [&](const std::string& w) {
      if (log) log(fmt::format("cell beta={} seed={}: {}", beta, seed, w));
    });
    eval::write_eval_outputs(dir / "eval", table, metrics, config.k_values.back());

    cell.rec_auroc = metrics.detectors.front().global.auroc;
    for (std::size_t d = 1; d < metrics.detectors.size(); ++d)
      cell.zk_auroc.push_back(metrics.detectors[d].global.auroc);
    cell.ok = true;

    auto j = cell_to_json(cell);
    j["dataset_digest"] = split.digest;
    j["train_report"] = model::to_json(trained.report);
    write_json(result_file, j);
    if (log)
      log(fmt::format("cell beta={} seed={}: rec AUROC {:.4f}, z{} AUROC {:.4f} ({:.1f}s training)", beta,
                      seed, cell.rec_auroc, config.k_values.back(), cell.zk_auroc.back(),
                      trained.report.wall_seconds));
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
    if (log) log(fmt::format("cell beta={} seed={}: FAILED: {}", beta, seed, e.what()));
  }
  return cell;
}

dataset::EncodedSplit load_or_build_split(const SweepConfig& config) {
  if (!config.archive.empty() && fs::exists(config.archive)) return dataset::load_archive(config.archive);
  auto train = dataset::parse_nslkdd(config.train_file);
  auto test = dataset::parse_nslkdd(config.test_file);
  std::vector<dataset::Record> all;
  all.reserve(train.size() + test.size());
  all.insert(all.end(), train.begin(), train.end());
  all.insert(all.end(), test.begin(), test.end());
  const auto split = dataset::split_dataset(std::move(train), std::move(test));
  const auto pre = dataset::Preprocessor::fit(split.x_train, all);
  auto encoded = dataset::encode_split(split, pre);
  if (!config.archive.empty()) dataset::save_archive(config.archive, encoded);
  return encoded;
}

void aggregate(SweepResult& result) {
  result.rows.clear();
  const std::size_t cols = result.columns();
  for (const double beta : result.betas) {
    BetaRow row;
    row.beta = beta;
    std::vector<double> sum(cols, 0.0);
    for (const auto seed : result.seeds) {
      const CellResult* c = result.cell(beta, seed);
      if (c == nullptr || !c->ok) continue;
      if (c->zk_auroc.size() != result.k_values.size())
        throw EvalError(fmt::format("cell beta={} seed={} has {} Z_k values, expected {}", beta, seed,
                                    c->zk_auroc.size(), result.k_values.size()));
      for (std::size_t k = 0; k < result.k_values.size(); ++k) sum[k] += c->zk_auroc[k];
      sum[cols - 1] += c->rec_auroc;
      ++row.seeds_ok;
    }
    if (row.seeds_ok > 0) {
      for (auto& s : sum) s /= static_cast<double>(row.seeds_ok);
      row.mean_auroc = sum;
      row.best_column = static_cast<std::size_t>(std::max_element(sum.begin(), sum.end()) - sum.begin());
      row.beats_rec.resize(result.k_values.size());
      for (std::size_t k = 0; k < result.k_values.size(); ++k) row.beats_rec[k] = sum[k] > sum[cols - 1];
    }
    result.rows.push_back(std::move(row));
  }
}

SweepResult run_sweep(const SweepConfig& config, const Log& log) {
  config.validate();
  const auto split = load_or_build_split(config);
  if (log)
    log(fmt::format("dataset {}: train={} test={} attack={} width={}", split.digest.substr(0, 12),
                    split.train.size(), split.test.size(), split.attack.size(), split.layout.width()));

  SweepResult result;
  result.betas = config.betas;
  result.k_values = config.k_values;
  result.seeds = config.seeds;
  result.dataset_digest = split.digest;
  result.cells.resize(config.betas.size() * config.seeds.size());

  std::mutex log_mutex;
  const Log safe_log = [&](const std::string& m) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(m);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) {
      const double beta = config.betas[i / config.seeds.size()];
      const auto seed = config.seeds[i % config.seeds.size()];
      result.cells[i] = run_cell(split, config, beta, seed, safe_log);
    }
  };
  const std::size_t workers = std::min(config.workers, result.cells.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.trainings_run = static_cast<std::size_t>(
      std::count_if(result.cells.begin(), result.cells.end(), [](const CellResult& c) { return c.trained; }));
  aggregate(result);
  emit_report(result, ReportFormat::all, config.out_dir);
  return result;
}

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"beta", row.beta}, {"seeds_ok", row.seeds_ok}, {"mean_auroc", row.mean_auroc}};
    j["best_column"] = row.best_column ? nlohmann::json(*row.best_column) : nlohmann::json(nullptr);
    j["beats_rec"] = row.beats_rec;
    rows.push_back(j);
  }
  return {{"format", "nslvae-sweep-result"},
          {"betas", r.betas},
          {"k_values", r.k_values},
          {"seeds", r.seeds},
          {"dataset_digest", r.dataset_digest},
          {"trainings_run", r.trainings_run},
          {"cells", cells},
          {"rows", rows}};
}

SweepResult sweep_result_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nslvae-sweep-result") throw FormatError("not a sweep result file");
  SweepResult r;
  j.at("betas").get_to(r.betas);
  j.at("k_values").get_to(r.k_values);
  j.at("seeds").get_to(r.seeds);
  r.dataset_digest = j.value("dataset_digest", "");
  r.trainings_run = j.value("trainings_run", std::size_t{0});
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  aggregate(r);
  return r;
}

}  // namespace nslvae::experiment
