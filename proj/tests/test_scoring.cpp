#include <doctest.h>

#include <cmath>

#include "nslvae/error.hpp"
#include "nslvae/rng.hpp"
#include "nslvae/scoring.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace nslvae;
using namespace nslvae::scoring;

namespace {

Matrix random_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<double> row_of(const Matrix& m, Eigen::Index r) { return {m.row(r).data(), m.row(r).data() + m.cols()}; }

model::BetaVae small_model(const Layout& layout, std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.encoder_hidden = {16, 8};
  cfg.decoder_hidden = {8, 16};
  cfg.latent_dim = 3;
  model::BetaVae m(layout, cfg);
  m.initialize(seed);
  return m;
}

}  // namespace

TEST_CASE("knn_distances: simple instances") {
  Matrix axes(3, 3);
  axes.setIdentity();
  const LatentIndex idx(axes, ProjectionMode::mean);
  CHECK(idx.knn_distances(std::vector<double>{0, 0, 0}, 3) == std::vector<double>{1, 1, 1});
  CHECK(idx.knn_distances(row_of(axes, 1), 1) == std::vector<double>{0});
  CHECK(idx.backend() == "exact-brute-force");
  CHECK_THROWS_AS(idx.knn_distances(std::vector<double>{0, 0, 0}, 0), UsageError);
  CHECK_THROWS_AS(idx.knn_distances(std::vector<double>{0, 0, 0}, 4), UsageError);
  CHECK_THROWS_AS(idx.knn_distances(std::vector<double>{0, 0}, 1), ShapeError);
}

TEST_CASE("knn_distances match the brute-force oracle exactly") {
  const Matrix rows = random_rows(2000, 8, 1);
  const LatentIndex idx(rows, ProjectionMode::mean);
  const Matrix queries = random_rows(100, 8, 2);
  const std::vector<std::size_t> ks{1, 7, 100, 500, 2000};
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const auto z = row_of(queries, q);
    const auto oracle = testing::brute_force_neighbors(rows, z);
    const auto got = idx.knn_distances(z, 500);
    REQUIRE(got.size() == 500);
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j] == oracle[j].distance);
    const auto zk = zk_scores(idx, z, ks);
    const auto direct = testing::direct_zk(oracle, ks);
    for (std::size_t j = 0; j < ks.size(); ++j) CHECK(std::abs(zk[j] - direct[j]) <= 1e-12 * std::max(1.0, direct[j]));
  }
}

TEST_CASE("knn with tied rows and an index row as query") {
  Matrix rows(5, 2);
  rows << 1, 0, 0, 1, 1, 0, -1, 0, 3, 3;
  const LatentIndex idx(rows, ProjectionMode::mean);
  CHECK(idx.knn_distances(std::vector<double>{0, 0}, 4) == std::vector<double>{1, 1, 1, 1});
  CHECK(zk_scores(idx, std::vector<double>{3, 3}, std::vector<std::size_t>{1})[0] == 0.0);
}

TEST_CASE("prefix_means") {
  const std::vector<double> d{1, 2, 3};
  CHECK(prefix_means(d, std::vector<std::size_t>{2})[0] == 1.5);
  CHECK(prefix_means(d, std::vector<std::size_t>{1, 2, 3}) == std::vector<double>{1, 1.5, 2});
  CHECK_THROWS_AS(prefix_means(d, std::vector<std::size_t>{4}), UsageError);
}

TEST_CASE("classify is strict and monotone") {
  CHECK(classify(1.0, 1.0) == Verdict::normal);
  CHECK(classify(std::nextafter(1.0, 2.0), 1.0) == Verdict::anomaly);
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const double s = rng.normal(), tau = rng.normal(), up = tau + rng.uniform();
    if (classify(s, tau) == Verdict::normal) CHECK(classify(s, up) == Verdict::normal);
    if (classify(s, tau) == Verdict::anomaly) CHECK(classify(s + rng.uniform(), tau) == Verdict::anomaly);
  }
}

TEST_CASE("DetectorConfig validation") {
  DetectorConfig c;
  c.validate(5000);
  CHECK_THROWS_AS(c.validate(4999), UsageError);
  c.k_values = {1, 5, 5};
  CHECK_THROWS_AS(c.validate(10), UsageError);
  c.k_values = {0, 2};
  CHECK_THROWS_AS(c.validate(10), UsageError);
  CHECK(projection_from_string("sampled") == ProjectionMode::sampled);
  CHECK(to_string(ProjectionMode::mean) == "mean");
  CHECK_THROWS(projection_from_string("median"));
}

TEST_CASE("projection and latent index from a model") {
  const Layout layout{{3, 4}, 2, 5};
  const auto m = small_model(layout, 9);
  Rng rng(10);
  Matrix x(50, static_cast<Eigen::Index>(layout.width()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  const auto idx = LatentIndex::build(m, x, ProjectionMode::mean, 0);
  CHECK(idx.size() == 50);
  CHECK(idx.dim() == 3);
  CHECK(idx.rows() == m.encode(x).first);
  CHECK(LatentIndex::build(m, x, ProjectionMode::mean, 123).rows() == idx.rows());

  const auto s1 = LatentIndex::build(m, x, ProjectionMode::sampled, 5);
  const auto s2 = LatentIndex::build(m, x, ProjectionMode::sampled, 5);
  CHECK(s1.rows() == s2.rows());
  CHECK(s1.rows() != idx.rows());
  CHECK(s1.mode() == ProjectionMode::sampled);
}

TEST_CASE("rec scores against an independent loss implementation") {
  const auto split = testing::synthetic_split(testing::scratch_dir("scoring-rec"), {300, 100, 80, 80, 3});
  model::ModelConfig cfg;
  model::BetaVae m(split.layout, cfg);
  m.initialize(4);

  Matrix all(static_cast<Eigen::Index>(split.test.size() + split.attack.size()), split.test.x.cols());
  all << split.test.x, split.attack.x;
  const auto scores = rec_scores(m, all, ProjectionMode::mean, 0);
  const Matrix recon = m.decode(m.encode(all).first);
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    const double oracle = testing::naive_rec_loss(split.layout, row_of(all, r), row_of(recon, r));
    CHECK(std::abs(scores[static_cast<std::size_t>(r)] - oracle) <= 1e-9 * std::max(1.0, oracle));
    CHECK(scores[static_cast<std::size_t>(r)] >= 0.0);
  }
  CHECK(rec_score(m, row_of(all, 0), ProjectionMode::mean, 0) == scores[0]);
  CHECK(rec_score(m, row_of(all, 0), ProjectionMode::mean, 0) == rec_score(m, row_of(all, 0), ProjectionMode::mean, 0));
}

TEST_CASE("rec score of a perfect reconstruction is near zero") {
  const Layout layout{{3}, 2, 2};
  auto m = small_model(layout, 2);
  auto& out = m.params().output;
  out.weights.setZero();
  out.bias << 40, -40, -40, 40, -40, 0.5, -1.5;
  const std::vector<double> x{1, 0, 0, 1, 0, 0.5, -1.5};
  CHECK(rec_score(m, x, ProjectionMode::mean, 0) < 1e-5);
}

TEST_CASE("score_split: ordering, thread independence, layout mismatch") {
  const auto dir = testing::scratch_dir("scoring-split");
  const auto split = testing::synthetic_split(dir, {300, 120, 90, 60, 5});
  model::ModelConfig cfg;
  cfg.beta = 1e-4;
  cfg.seed = 3;
  model::BetaVae m(split.layout, cfg);
  m.initialize(6);

  DetectorConfig dc;
  dc.k_values = {1, 10, 100, 300};
  const auto t1 = score_split(m, split, dc, 1);
  const auto t4 = score_split(m, split, dc, 4);
  REQUIRE(t1.rows.size() == split.test.size() + split.attack.size());
  CHECK(t1.beta == 1e-4);
  CHECK(t1.seed == 3);
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].id == i);
    CHECK(t1.rows[i].split == (i < split.test.size() ? "test" : "attack"));
    CHECK(t1.rows[i].rec == t4.rows[i].rec);
    CHECK(t1.rows[i].zk == t4.rows[i].zk);
    CHECK(t1.rows[i].zk.size() == 4);
  }
  CHECK(t1.rows[0].category == dataset::AttackCategory::normal);
  CHECK(t1.rows.back().category != dataset::AttackCategory::normal);

  dc.k_values = {1, 301};
  CHECK_THROWS_AS(score_split(m, split, dc), UsageError);

  // A checkpoint from a different layout width cannot score this archive.
  const Layout other{{3}, 4, 34};
  model::BetaVae wrong(other, model::ModelConfig{});
  wrong.initialize(1);
  const auto path = dir / "wrong.ckpt";
  model::save_checkpoint(path, wrong, nlohmann::json::object());
  dc.k_values = {1};
  CHECK_THROWS_AS(score_split(model::load_checkpoint(path).model, split, dc), ShapeError);

  SUBCASE("scores file round-trip") {
    dc.k_values = {1, 10, 100, 300};
    const auto file = dir / "scores.tsv";
    write_scores(file, t1);
    const auto back = read_scores(file);
    CHECK(back.beta == t1.beta);
    CHECK(back.seed == t1.seed);
    CHECK(back.k_values == t1.k_values);
    REQUIRE(back.rows.size() == t1.rows.size());
    for (std::size_t i = 0; i < t1.rows.size(); ++i) {
      CHECK(back.rows[i].rec == t1.rows[i].rec);
      CHECK(back.rows[i].zk == t1.rows[i].zk);
      CHECK(back.rows[i].label == t1.rows[i].label);
      CHECK(back.rows[i].source == t1.rows[i].source);
      CHECK(back.rows[i].category == t1.rows[i].category);
    }
  }
}
