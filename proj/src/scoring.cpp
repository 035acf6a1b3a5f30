#include "nslvae/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "nslvae/error.hpp"
#include "nslvae/rng.hpp"
#include "parallel.hpp"

namespace nslvae::scoring {

std::string_view to_string(ProjectionMode mode) {
  return mode == ProjectionMode::mean ? "mean" : "sampled";
}

ProjectionMode projection_from_string(std::string_view name) {
  if (name == "mean") return ProjectionMode::mean;
  if (name == "sampled") return ProjectionMode::sampled;
  throw UsageError(fmt::format("unknown projection mode '{}'", name));
}

void DetectorConfig::validate(std::size_t index_rows) const {
  if (k_values.empty()) throw UsageError("detector: k list is empty");
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] == 0) throw UsageError("detector: k values must be positive");
    if (i > 0 && k_values[i] <= k_values[i - 1]) throw UsageError("detector: k values must be strictly increasing");
  }
  if (k_values.back() > index_rows)
    throw UsageError(fmt::format("detector: k={} exceeds the {} training projections", k_values.back(), index_rows));
}

Matrix project(const model::BetaVae& model, const Matrix& x, ProjectionMode mode, std::uint64_t noise_seed) {
  auto [mu, logvar] = model.encode(x);
  if (mode == ProjectionMode::mean) return mu;
  Rng rng(noise_seed);
  Matrix noise(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  return nn::reparameterize(mu, logvar, noise);
}

std::vector<double> rec_scores(const model::BetaVae& model, const Matrix& x, ProjectionMode mode,
                               std::uint64_t noise_seed) {
  const Matrix z = project(model, x, mode, noise_seed);
  const Matrix recon = model.decode(z);
  const Vector loss = model.reconstruction_loss_rows(x, recon);
  return std::vector<double>(loss.data(), loss.data() + loss.size());
}

double rec_score(const model::BetaVae& model, std::span<const double> x, ProjectionMode mode,
                 std::uint64_t noise_seed) {
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  return rec_scores(model, row, mode, noise_seed).front();
}

LatentIndex::LatentIndex(Matrix rows, ProjectionMode mode)
    : rows_(std::move(rows)), columns_(rows_.transpose()), mode_(mode) {
  if (!rows_.allFinite()) throw ShapeError("latent index: non-finite projection");
  if (rows_.rows() == 0) throw ShapeError("latent index: no rows");
}

LatentIndex LatentIndex::build(const model::BetaVae& model, const Matrix& x_train, ProjectionMode mode,
                               std::uint64_t noise_seed) {
  return LatentIndex(project(model, x_train, mode, noise_seed), mode);
}

namespace {

// Squared distances accumulate dimension by dimension, so each row's sum is
// formed in the same order as a plain per-row loop.
void knn_into(const Matrix& columns, std::span<const double> z, std::size_t k_max, std::vector<double>& sq,
              std::vector<double>& out) {
  const auto n = static_cast<std::size_t>(columns.cols());
  const auto dim = static_cast<std::size_t>(columns.rows());
  if (z.size() != dim) throw ShapeError(fmt::format("knn: query dim {} != index dim {}", z.size(), dim));
  if (k_max < 1 || k_max > n) throw UsageError(fmt::format("knn: k_max={} outside [1, {}]", k_max, n));
  sq.assign(n, 0.0);
  double* acc = sq.data();
  for (std::size_t d = 0; d < dim; ++d) {
    const double* col = columns.data() + d * n;
    const double zd = z[d];
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = zd - col[i];
      acc[i] += diff * diff;
    }
  }
  const auto kth = sq.begin() + static_cast<std::ptrdiff_t>(k_max);
  if (k_max < n) std::nth_element(sq.begin(), kth - 1, sq.end());
  std::sort(sq.begin(), kth);
  out.resize(k_max);
  for (std::size_t i = 0; i < k_max; ++i) out[i] = std::sqrt(sq[i]);
}

}  // namespace

std::vector<double> LatentIndex::knn_distances(std::span<const double> z, std::size_t k_max) const {
  std::vector<double> sq;
  std::vector<double> out;
  knn_into(columns_, z, k_max, sq, out);
  return out;
}

std::vector<double> prefix_means(std::span<const double> sorted, std::span<const std::size_t> k_values) {
  std::vector<double> out;
  out.reserve(k_values.size());
  double running = 0.0;
  std::size_t taken = 0;
  for (const auto k : k_values) {
    if (k == 0 || k > sorted.size()) throw UsageError(fmt::format("prefix mean: k={} out of range", k));
    if (k < taken) throw UsageError("prefix mean: k values must be increasing");
    for (; taken < k; ++taken) running += sorted[taken];
    out.push_back(running / static_cast<double>(k));
  }
  return out;
}

std::vector<double> zk_scores(const LatentIndex& index, std::span<const double> z,
                              std::span<const std::size_t> k_values) {
  if (k_values.empty()) return {};
  const auto k_max = *std::max_element(k_values.begin(), k_values.end());
  const auto distances = index.knn_distances(z, k_max);
  return prefix_means(distances, k_values);
}

ScoreTable score_split(const model::BetaVae& model, const dataset::EncodedSplit& split,
                       const DetectorConfig& config, std::size_t threads) {
  if (!(split.layout == model.layout()))
    throw ShapeError(fmt::format("checkpoint layout width {} does not match archive layout width {}",
                                 model.layout().width(), split.layout.width()));
  config.validate(split.train.size());

  std::uint64_t seed_state = config.noise_seed;
  const std::uint64_t index_seed = splitmix64(seed_state);
  const std::uint64_t query_seed = splitmix64(seed_state);

  const LatentIndex index = LatentIndex::build(model, split.train.x, config.projection, index_seed);

  Matrix queries(static_cast<Eigen::Index>(split.test.size() + split.attack.size()), split.train.x.cols());
  queries.topRows(static_cast<Eigen::Index>(split.test.size())) = split.test.x;
  queries.bottomRows(static_cast<Eigen::Index>(split.attack.size())) = split.attack.x;
  const Matrix z = project(model, queries, config.projection, query_seed);
  const Vector rec = model.reconstruction_loss_rows(queries, model.decode(z));

  const auto n = static_cast<std::size_t>(queries.rows());
  ScoreTable table;
  table.projection = config.projection;
  table.k_values = config.k_values;
  table.beta = model.config().beta;
  table.seed = model.config().seed;
  table.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = table.rows[i];
    const bool is_test = i < split.test.size();
    const auto& set = is_test ? split.test : split.attack;
    const std::size_t j = is_test ? i : i - split.test.size();
    row.id = i;
    row.split = is_test ? "test" : "attack";
    row.source = set.sources[j];
    row.label = set.labels[j];
    row.category = dataset::map_attack_category(row.label);
    row.rec = rec[static_cast<Eigen::Index>(i)];
  }

  const std::size_t k_max = config.k_values.back();
  detail::parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch;
    std::vector<double> distances;
    for (std::size_t i = begin; i < end; ++i) {
      const double* zi = z.row(static_cast<Eigen::Index>(i)).data();
      knn_into(index.columns(), std::span<const double>(zi, index.dim()), k_max, scratch, distances);
      table.rows[i].zk = prefix_means(distances, config.k_values);
    }
  });
  return table;
}

void write_scores(const std::filesystem::path& path, const ScoreTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << "# nslvae-scores v1\n";
  out << fmt::format("# beta={}\n# seed={}\n# projection={}\n# k={}\n", table.beta, table.seed,
                     to_string(table.projection), fmt::join(table.k_values, ","));
  out << "id\tsplit\tsource\tlabel\tcategory\trec";
  for (const auto k : table.k_values) out << "\tz" << k;
  out << '\n';
  for (const auto& r : table.rows) {
    out << fmt::format("{}\t{}\t{}\t{}\t{}\t{}", r.id, r.split, dataset::to_string(r.source), r.label,
                       dataset::to_string(r.category), r.rec);
    for (const double v : r.zk) out << '\t' << fmt::format("{}", v);
    out << '\n';
  }
  if (!out) throw IoError(fmt::format("short write to {}", path.string()));
}

namespace {

double parse_double(std::string_view s, const std::string& ctx) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError(fmt::format("{}: bad number '{}'", ctx, s));
  return v;
}

std::uint64_t parse_u64(std::string_view s, const std::string& ctx) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError(fmt::format("{}: bad integer '{}'", ctx, s));
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

ScoreTable read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  ScoreTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string ctx = fmt::format("{}:{}", path.filename().string(), line_no);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string_view value = std::string_view(line).substr(eq + 1);
      if (key == "beta") table.beta = parse_double(value, ctx);
      else if (key == "seed") table.seed = parse_u64(value, ctx);
      else if (key == "projection") table.projection = projection_from_string(value);
      else if (key == "k") {
        std::size_t start = 0;
        while (start <= value.size()) {
          auto comma = value.find(',', start);
          if (comma == std::string_view::npos) comma = value.size();
          table.k_values.push_back(parse_u64(value.substr(start, comma - start), ctx));
          start = comma + 1;
        }
      }
      continue;
    }
    const auto fields = split_tabs(line);
    if (!header_seen) {
      if (fields.size() != 6 + table.k_values.size() || fields[0] != "id")
        throw ParseError(ctx + ": header does not match the declared k list");
      header_seen = true;
      continue;
    }
    if (fields.size() != 6 + table.k_values.size())
      throw ParseError(fmt::format("{}: expected {} fields, found {}", ctx, 6 + table.k_values.size(), fields.size()));
    ScoreRecord r;
    r.id = parse_u64(fields[0], ctx);
    r.split = std::string(fields[1]);
    r.source = dataset::source_from_string(fields[2]);
    r.label = std::string(fields[3]);
    r.category = dataset::category_from_string(fields[4]);
    r.rec = parse_double(fields[5], ctx);
    for (std::size_t k = 0; k < table.k_values.size(); ++k) r.zk.push_back(parse_double(fields[6 + k], ctx));
    table.rows.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError(path.filename().string() + ": missing header row");
  return table;
}

}  // namespace nslvae::scoring
