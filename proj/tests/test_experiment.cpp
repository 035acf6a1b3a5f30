#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nslvae/error.hpp"
#include "nslvae/experiment.hpp"
#include "synthetic.hpp"

using namespace nslvae;
using namespace nslvae::experiment;

namespace {

SweepConfig small_sweep(const std::filesystem::path& dir, std::uint64_t data_seed = 3) {
  const auto files = testing::write_synthetic_nslkdd(dir / "data", {400, 100, 80, 80, data_seed});
  SweepConfig c;
  c.train_file = files.train;
  c.test_file = files.test;
  c.cache_dir = dir / "cache";
  c.out_dir = dir / "out";
  c.betas = {0.0};
  c.seeds = {1};
  c.k_values = {1};
  c.model.epochs = 2;
  c.model.batch_size = 128;
  return c;
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, '\t');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("sweep config defaults and validation") {
  SweepConfig c;
  CHECK(c.betas == std::vector<double>{0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5});
  CHECK(c.seeds.size() == 4);
  CHECK(c.k_values.size() == 13);
  c.train_file = "a";
  c.test_file = "b";
  c.validate();
  const auto back = sweep_config_from_json(to_json(c));
  CHECK(back.betas == c.betas);
  CHECK(back.seeds == c.seeds);
  CHECK(back.k_values == c.k_values);

  c.seeds = {1, 1};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.seeds = {};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.seeds = {1};
  c.betas = {};
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("one beta, one seed, one k: one training and two AUROC cells; rerun hits the cache") {
  const auto dir = testing::scratch_dir("exp-count");
  const auto cfg = small_sweep(dir);
  const auto first = run_sweep(cfg);
  CHECK(first.trainings_run == 1);
  REQUIRE(first.cells.size() == 1);
  const auto& cell = first.cells[0];
  CHECK(cell.ok);
  CHECK(cell.zk_auroc.size() == 1);
  REQUIRE(first.rows.size() == 1);
  CHECK(first.rows[0].mean_auroc.size() == 2);
  CHECK(first.rows[0].best_column.has_value());
  CHECK(std::filesystem::exists(cfg.cache_dir / cell.key / "checkpoint.bin"));
  CHECK(std::filesystem::exists(cfg.cache_dir / cell.key / "scores.tsv"));
  CHECK(std::filesystem::exists(cfg.cache_dir / cell.key / "eval" / "metrics.json"));
  for (const char* f : {"table.txt", "table.tsv", "fig1.tsv", "cells.tsv", "result.json"})
    CHECK(std::filesystem::exists(cfg.out_dir / f));

  const auto second = run_sweep(cfg);
  CHECK(second.trainings_run == 0);
  CHECK(second.cells[0].from_cache);
  CHECK(second.cells[0].rec_auroc == cell.rec_auroc);
  CHECK(second.cells[0].zk_auroc == cell.zk_auroc);
  CHECK(second.cells[0].checkpoint_digest == cell.checkpoint_digest);
  CHECK(second.rows[0].mean_auroc == first.rows[0].mean_auroc);
}

TEST_CASE("means, markers and report files") {
  const auto dir = testing::scratch_dir("exp-grid");
  auto cfg = small_sweep(dir);
  cfg.betas = {0.0, 0.5};
  cfg.seeds = {1, 2};
  cfg.k_values = {1, 10, 50};
  cfg.workers = 3;
  const auto r = run_sweep(cfg);
  CHECK(r.trainings_run == 4);
  REQUIRE(r.rows.size() == 2);

  for (const auto& row : r.rows) {
    CHECK(row.seeds_ok == 2);
    for (std::size_t c = 0; c < r.columns(); ++c) {
      const auto* a = r.cell(row.beta, 1);
      const auto* b = r.cell(row.beta, 2);
      const auto value = [&](const CellResult* x) { return c < r.k_values.size() ? x->zk_auroc[c] : x->rec_auroc; };
      CHECK(std::abs(row.mean_auroc[c] - (value(a) + value(b)) / 2.0) < 1e-12);
    }
  }

  // Re-derive the markers from the emitted delimited table.
  const auto tsv = read_tsv(cfg.out_dir / "table.tsv");
  REQUIRE(tsv.size() == 3);
  const auto& header = tsv[0];
  CHECK(header[2] == "Z_1");
  CHECK(header[5] == "L_rec");
  for (std::size_t i = 1; i < tsv.size(); ++i) {
    const auto& line = tsv[i];
    std::vector<double> v;
    for (std::size_t c = 2; c < 6; ++c) v.push_back(std::stod(line[c]));
    const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    CHECK(line[6] == header[2 + best]);
    std::string beats;
    for (std::size_t c = 0; c < 3; ++c)
      if (v[c] > v[3]) beats += (beats.empty() ? "" : ",") + header[2 + c];
    CHECK(line[7] == (beats.empty() ? "-" : beats));
  }

  const auto back = sweep_result_from_json(nlohmann::json::parse(std::ifstream(cfg.out_dir / "result.json")));
  CHECK(back.rows.size() == 2);
  CHECK(back.rows[1].mean_auroc == r.rows[1].mean_auroc);
  CHECK(back.rows[1].best_column == r.rows[1].best_column);

  const auto table = format_table(r);
  CHECK(table.find("**") != std::string::npos);
  CHECK(table.find("L_rec") != std::string::npos);

  const auto written = emit_report(r, report_format_from_string("json"), dir / "json-only");
  CHECK(written.size() == 1);
  CHECK_THROWS_AS(report_format_from_string("xml"), UsageError);
}

TEST_CASE("best marker lands on L_rec when every Z_k is lower") {
  SweepResult r;
  r.betas = {0.5};
  r.seeds = {1};
  r.k_values = {1, 5000};
  CellResult c;
  c.beta = 0.5;
  c.seed = 1;
  c.ok = true;
  c.rec_auroc = 0.96;
  c.zk_auroc = {0.80, 0.92};
  r.cells = {c};
  aggregate(r);
  REQUIRE(r.rows[0].best_column.has_value());
  CHECK(*r.rows[0].best_column == 2);
  CHECK(r.rows[0].beats_rec == std::vector<bool>{false, false});
  CHECK(format_table(r).find("**96.00**") != std::string::npos);
}

TEST_CASE("failed cells are gaps, not zeros, and are not cached") {
  const auto dir = testing::scratch_dir("exp-fail");
  auto cfg = small_sweep(dir);
  cfg.k_values = {1, 100000};  // more neighbours than training rows
  const auto r = run_sweep(cfg);
  REQUIRE(r.cells.size() == 1);
  CHECK(!r.cells[0].ok);
  CHECK(!r.cells[0].error.empty());
  CHECK(r.rows[0].seeds_ok == 0);
  CHECK(r.rows[0].mean_auroc.empty());
  CHECK(!r.rows[0].best_column.has_value());
  CHECK(!std::filesystem::exists(cfg.cache_dir / r.cells[0].key / "cell.json"));
  const auto text = format_table(r);
  CHECK(text.find("NA") != std::string::npos);
  CHECK(text.find("failed") != std::string::npos);

  SUBCASE("partial failure keeps the other seeds") {
    SweepResult m;
    m.betas = {0.0};
    m.seeds = {1, 2};
    m.k_values = {1};
    CellResult good;
    good.beta = 0.0;
    good.seed = 1;
    good.ok = true;
    good.rec_auroc = 0.9;
    good.zk_auroc = {0.8};
    CellResult bad;
    bad.beta = 0.0;
    bad.seed = 2;
    bad.error = "boom";
    m.cells = {good, bad};
    aggregate(m);
    CHECK(m.rows[0].seeds_ok == 1);
    CHECK(m.rows[0].mean_auroc == std::vector<double>{0.8, 0.9});
  }
}

TEST_CASE("cache keys depend on the dataset, the cell and the model template") {
  SweepConfig c;
  const auto k = cell_key("digest-a", c, 1e-5, 1);
  CHECK(k == cell_key("digest-a", c, 1e-5, 1));
  CHECK(k != cell_key("digest-b", c, 1e-5, 1));
  CHECK(k != cell_key("digest-a", c, 1e-4, 1));
  CHECK(k != cell_key("digest-a", c, 1e-5, 2));
  auto other = c;
  other.model.reduction = model::FeatureReduction::mean;
  CHECK(k != cell_key("digest-a", other, 1e-5, 1));
  other = c;
  other.model.epochs = 50;
  CHECK(k != cell_key("digest-a", other, 1e-5, 1));
  other = c;
  other.projection = scoring::ProjectionMode::sampled;
  CHECK(k != cell_key("digest-a", other, 1e-5, 1));
  other = c;
  other.workers = 8;
  CHECK(k == cell_key("digest-a", other, 1e-5, 1));
}

TEST_CASE("a different dataset never reuses cached cells") {
  const auto dir = testing::scratch_dir("exp-digest");
  auto cfg = small_sweep(dir, 3);
  const auto a = run_sweep(cfg);
  const auto files = testing::write_synthetic_nslkdd(dir / "data2", {400, 100, 80, 80, 4});
  cfg.train_file = files.train;
  cfg.test_file = files.test;
  const auto b = run_sweep(cfg);
  CHECK(a.dataset_digest != b.dataset_digest);
  CHECK(b.trainings_run == 1);
  CHECK(b.cells[0].key != a.cells[0].key);
}

TEST_CASE("archive input is equivalent to raw files") {
  const auto dir = testing::scratch_dir("exp-archive");
  auto cfg = small_sweep(dir);
  cfg.archive = dir / "split.bin";
  const auto built = load_or_build_split(cfg);
  CHECK(std::filesystem::exists(cfg.archive));
  const auto loaded = load_or_build_split(cfg);
  CHECK(loaded.digest == built.digest);
  cfg.archive.clear();
  CHECK(load_or_build_split(cfg).digest == built.digest);
}
