#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "nslvae/error.hpp"
#include "nslvae/experiment.hpp"

namespace nslvae::experiment {

namespace fs = std::filesystem;

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "table-text" || name == "table") return ReportFormat::table_text;
  if (name == "delimited" || name == "tsv") return ReportFormat::delimited;
  if (name == "json") return ReportFormat::json;
  if (name == "all") return ReportFormat::all;
  throw UsageError(fmt::format("unknown report format '{}'", name));
}

namespace {

std::vector<std::string> column_names(const SweepResult& r) {
  std::vector<std::string> names;
  for (const auto k : r.k_values) names.push_back(fmt::format("Z_{}", k));
  names.emplace_back("L_rec");
  return names;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

std::string format_table(const SweepResult& r) {
  const auto names = column_names(r);
  const std::size_t width = 14;
  std::ostringstream os;
  os << "Mean AUROC (%) over seeds. **x** = best per beta, _x_ = Z_k beats L_rec.\n";
  os << fmt::format("{:>10} {:>4}", "beta", "n");
  for (const auto& n : names) os << fmt::format(" {:>{}}", n, width);
  os << '\n';
  for (const auto& row : r.rows) {
    os << fmt::format("{:>10} {:>4}", fmt::format("{:g}", row.beta), row.seeds_ok);
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::string cell = "NA";
      if (!row.mean_auroc.empty()) {
        cell = fmt::format("{:.2f}", 100.0 * row.mean_auroc[c]);
        if (c < r.k_values.size() && row.beats_rec[c]) cell = "_" + cell + "_";
        if (row.best_column && *row.best_column == c) cell = "**" + cell + "**";
      }
      os << fmt::format(" {:>{}}", cell, width);
    }
    os << '\n';
  }
  std::size_t failed = 0;
  for (const auto& c : r.cells) failed += c.ok ? 0 : 1;
  if (failed > 0) {
    os << fmt::format("\n{} failed cell(s) excluded from the means:\n", failed);
    for (const auto& c : r.cells)
      if (!c.ok) os << fmt::format("  beta={:g} seed={}: {}\n", c.beta, c.seed, c.error);
  }
  return os.str();
}

std::vector<fs::path> emit_report(const SweepResult& r, ReportFormat format, const fs::path& out_dir) {
  if (r.rows.empty()) throw EvalError("report: empty sweep result");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const bool all = format == ReportFormat::all;
  const auto names = column_names(r);

  if (all || format == ReportFormat::table_text) {
    write_text(out_dir / "table.txt", format_table(r));
    written.push_back(out_dir / "table.txt");
  }
  if (all || format == ReportFormat::delimited) {
    std::ostringstream os;
    os << "beta\tseeds_ok";
    for (const auto& n : names) os << '\t' << n;
    os << "\tbest\tbeats_rec\n";
    for (const auto& row : r.rows) {
      os << fmt::format("{}\t{}", row.beta, row.seeds_ok);
      for (std::size_t c = 0; c < names.size(); ++c)
        os << '\t' << (row.mean_auroc.empty() ? std::string("NA") : fmt::format("{}", row.mean_auroc[c]));
      os << '\t' << (row.best_column ? names[*row.best_column] : std::string("NA")) << '\t';
      std::string beats;
      for (std::size_t k = 0; k < row.beats_rec.size(); ++k)
        if (row.beats_rec[k]) beats += (beats.empty() ? "" : ",") + names[k];
      os << (beats.empty() ? "-" : beats) << '\n';
    }
    write_text(out_dir / "table.tsv", os.str());
    written.push_back(out_dir / "table.tsv");

    std::ostringstream fig;
    fig << "beta\tdetector\tk\tmean_auroc\n";
    for (const auto& row : r.rows) {
      if (row.mean_auroc.empty()) continue;
      for (std::size_t k = 0; k < r.k_values.size(); ++k)
        fig << fmt::format("{}\tZ\t{}\t{}\n", row.beta, r.k_values[k], row.mean_auroc[k]);
      fig << fmt::format("{}\tL_rec\tNA\t{}\n", row.beta, row.mean_auroc.back());
    }
    write_text(out_dir / "fig1.tsv", fig.str());
    written.push_back(out_dir / "fig1.tsv");

    std::ostringstream cells;
    cells << "beta\tseed\tok\tkey\tL_rec";
    for (const auto k : r.k_values) cells << "\tZ_" << k;
    cells << '\n';
    for (const auto& c : r.cells) {
      cells << fmt::format("{}\t{}\t{}\t{}\t{}", c.beta, c.seed, c.ok ? 1 : 0, c.key,
                           c.ok ? fmt::format("{}", c.rec_auroc) : std::string("NA"));
      for (std::size_t k = 0; k < r.k_values.size(); ++k)
        cells << '\t' << (c.ok ? fmt::format("{}", c.zk_auroc[k]) : std::string("NA"));
      cells << '\n';
    }
    write_text(out_dir / "cells.tsv", cells.str());
    written.push_back(out_dir / "cells.tsv");
  }
  if (all || format == ReportFormat::json) {
    write_text(out_dir / "result.json", to_json(r).dump(2) + "\n");
    written.push_back(out_dir / "result.json");
  }
  return written;
}

}  // namespace nslvae::experiment
