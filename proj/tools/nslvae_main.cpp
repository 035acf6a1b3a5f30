// nslvae: preprocess NSL-KDD, train the beta-VAE, score, evaluate and sweep.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nslvae/dataset.hpp"
#include "nslvae/error.hpp"
#include "nslvae/eval.hpp"
#include "nslvae/experiment.hpp"
#include "nslvae/model.hpp"
#include "nslvae/scoring.hpp"

namespace fs = std::filesystem;
using namespace nslvae;

namespace {

void log_line(const std::string& msg) { fmt::print(stderr, "[nslvae] {}\n", msg); }

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beta-VAE anomaly detection on NSL-KDD"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "raw KDDTrain+/KDDTest+ files -> encoded split archive + manifest");
  fs::path pre_train, pre_test, pre_out, pre_manifest;
  pre->add_option("--train", pre_train, "KDDTrain+ file")->required()->check(CLI::ExistingFile);
  pre->add_option("--test", pre_test, "KDDTest+ file")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "archive path")->required();
  pre->add_option("--manifest", pre_manifest, "manifest JSON path (default: <out>.manifest.json)");

  // train
  auto* tr = app.add_subcommand("train", "archive + beta + seed -> checkpoint");
  fs::path tr_archive, tr_out, tr_report, tr_config;
  model::ModelConfig tr_cfg;
  std::string tr_reduction = "sum";
  tr->add_option("--archive", tr_archive)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--config", tr_config, "model config JSON (overridden by flags)")->check(CLI::ExistingFile);
  auto* tr_beta = tr->add_option("--beta", tr_cfg.beta);
  auto* tr_seed = tr->add_option("--seed", tr_cfg.seed);
  auto* tr_epochs = tr->add_option("--epochs", tr_cfg.epochs);
  auto* tr_batch = tr->add_option("--batch-size", tr_cfg.batch_size);
  auto* tr_lr = tr->add_option("--lr", tr_cfg.lr);
  auto* tr_red = tr->add_option("--reduction", tr_reduction)->check(CLI::IsMember({"sum", "mean"}));
  tr->add_option("--report", tr_report, "training report JSON");

  // score
  auto* sc = app.add_subcommand("score", "checkpoint + archive -> scores file");
  fs::path sc_ckpt, sc_archive, sc_out;
  std::vector<std::size_t> sc_k = scoring::kDefaultKValues;
  std::string sc_projection = "mean";
  std::uint64_t sc_noise_seed = 0;
  std::size_t sc_threads = 0;
  sc->add_option("--checkpoint", sc_ckpt)->required()->check(CLI::ExistingFile);
  sc->add_option("--archive", sc_archive)->required()->check(CLI::ExistingFile);
  sc->add_option("--out", sc_out, "scores TSV")->required();
  sc->add_option("--k", sc_k, "k values")->delimiter(',');
  sc->add_option("--projection", sc_projection)->check(CLI::IsMember({"mean", "sampled"}));
  sc->add_option("--noise-seed", sc_noise_seed);
  sc->add_option("--threads", sc_threads);

  // eval
  auto* ev = app.add_subcommand("eval", "scores -> metrics JSON + ROC files");
  fs::path ev_scores, ev_out;
  std::size_t ev_joint_k = 0;
  ev->add_option("--scores", ev_scores)->required()->check(CLI::ExistingFile);
  ev->add_option("--out-dir", ev_out)->required();
  ev->add_option("--joint-k", ev_joint_k, "k for the joint score file (default: largest)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run the beta x k x seed grid");
  fs::path sw_config;
  std::size_t sw_workers = 0;
  sw->add_option("--config", sw_config, "sweep config JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--workers", sw_workers, "concurrent cells (overrides config)");

  // report
  auto* rp = app.add_subcommand("report", "sweep result -> tables and plot data");
  fs::path rp_result, rp_out;
  std::string rp_format = "all";
  rp->add_option("--result", rp_result, "result.json from a sweep")->required()->check(CLI::ExistingFile);
  rp->add_option("--out-dir", rp_out)->required();
  rp->add_option("--format", rp_format)->check(CLI::IsMember({"table-text", "delimited", "json", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*pre) {
      auto train = dataset::parse_nslkdd(pre_train);
      auto test = dataset::parse_nslkdd(pre_test);
      std::vector<dataset::Record> all(train);
      all.insert(all.end(), test.begin(), test.end());
      const auto split = dataset::split_dataset(std::move(train), std::move(test));
      const auto preprocessor = dataset::Preprocessor::fit(split.x_train, all);
      auto encoded = dataset::encode_split(split, preprocessor);
      dataset::save_archive(pre_out, encoded);
      if (pre_manifest.empty()) pre_manifest = pre_out.string() + ".manifest.json";
      auto manifest = preprocessor.manifest();
      manifest["counts"] = {{"x_train", split.x_train.size()},
                            {"x_test", split.x_test.size()},
                            {"x_attack", split.x_attack.size()}};
      manifest["archive_digest"] = encoded.digest;
      write_json_file(pre_manifest, manifest);
      log_line(fmt::format("x_train={} x_test={} x_attack={} width={} digest={}", split.x_train.size(),
                           split.x_test.size(), split.x_attack.size(), encoded.layout.width(), encoded.digest));
    } else if (*tr) {
      model::ModelConfig cfg;
      if (!tr_config.empty()) cfg = read_json_file(tr_config).get<model::ModelConfig>();
      if (*tr_beta) cfg.beta = tr_cfg.beta;
      if (*tr_seed) cfg.seed = tr_cfg.seed;
      if (*tr_epochs) cfg.epochs = tr_cfg.epochs;
      if (*tr_batch) cfg.batch_size = tr_cfg.batch_size;
      if (*tr_lr) cfg.lr = tr_cfg.lr;
      if (*tr_red) cfg.reduction = tr_reduction == "sum" ? model::FeatureReduction::sum : model::FeatureReduction::mean;
      const auto split = dataset::load_archive(tr_archive);
      cfg.input_width = split.layout.width();
      auto result = model::train(split.train.x, split.layout, cfg, [](std::size_t epoch, const nn::LossBreakdown& l) {
        log_line(fmt::format("epoch {:4d}  total {:.6f}  rec {:.6f}  kl {:.6f}", epoch, l.total, l.l_rec, l.l_kl));
      });
      model::save_checkpoint(tr_out, result.model, split.manifest);
      if (!tr_report.empty()) write_json_file(tr_report, model::to_json(result.report));
      log_line(fmt::format("checkpoint {} digest={} ({:.1f}s)", tr_out.string(), result.report.digest,
                           result.report.wall_seconds));
    } else if (*sc) {
      const auto ckpt = model::load_checkpoint(sc_ckpt);
      const auto split = dataset::load_archive(sc_archive);
      scoring::DetectorConfig det;
      det.k_values = sc_k;
      det.projection = scoring::projection_from_string(sc_projection);
      det.noise_seed = sc_noise_seed;
      const auto table = scoring::score_split(ckpt.model, split, det, sc_threads);
      scoring::write_scores(sc_out, table);
      log_line(fmt::format("scored {} samples -> {}", table.rows.size(), sc_out.string()));
    } else if (*ev) {
      const auto table = scoring::read_scores(ev_scores);
      const auto metrics = eval::evaluate(table, [](const std::string& w) { log_line("warning: " + w); });
      const std::size_t joint_k = ev_joint_k == 0 ? table.k_values.back() : ev_joint_k;
      eval::write_eval_outputs(ev_out, table, metrics, joint_k);
      for (const auto& d : metrics.detectors)
        log_line(fmt::format("{:>6}  AUROC {:.4f}", d.name, d.global.auroc));
    } else if (*sw) {
      auto config = experiment::sweep_config_from_json(read_json_file(sw_config));
      const fs::path base = sw_config.parent_path();
      config.train_file = resolve(base, config.train_file);
      config.test_file = resolve(base, config.test_file);
      config.archive = resolve(base, config.archive);
      config.cache_dir = resolve(base, config.cache_dir);
      config.out_dir = resolve(base, config.out_dir);
      if (sw_workers > 0) config.workers = sw_workers;
      const auto result = experiment::run_sweep(config, log_line);
      std::cout << experiment::format_table(result);
      log_line(fmt::format("{} training(s) run; reports in {}", result.trainings_run, config.out_dir.string()));
      for (const auto& c : result.cells)
        if (!c.ok) return static_cast<int>(ErrorKind::train);
    } else if (*rp) {
      const auto result = experiment::sweep_result_from_json(read_json_file(rp_result));
      for (const auto& p : experiment::emit_report(result, experiment::report_format_from_string(rp_format), rp_out))
        log_line("wrote " + p.string());
    }
  } catch (const Error& e) {
    log_line(fmt::format("error: {}", e.what()));
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    log_line(fmt::format("error: {}", e.what()));
    return 1;
  }
  return 0;
}
