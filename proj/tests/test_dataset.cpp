#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "nslvae/dataset.hpp"
#include "nslvae/error.hpp"
#include "synthetic.hpp"

using namespace nslvae;
using namespace nslvae::dataset;

namespace {

// 41 features + label + difficulty, in file order.
std::string row(const std::string& protocol, const std::string& service, const std::string& flag,
                const std::string& label, double src_bytes = 100, int logged_in = 1) {
  std::ostringstream os;
  os << "0," << protocol << ',' << service << ',' << flag << ',' << src_bytes << ",50,0,0,0,0,0," << logged_in;
  for (int i = 12; i < 41; ++i) os << ',' << (i == 20 || i == 21 ? "0" : i % 3 == 0 ? "0.5" : "1");
  os << ',' << label << ",20";
  return os.str();
}

std::vector<Record> parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_nslkdd(in, nslkdd_schema(), "mem");
}

}  // namespace

TEST_CASE("schema has 41 features: 3 categorical, 4 boolean, 34 continuous") {
  const auto& s = nslkdd_schema();
  CHECK(s.features.size() == 41);
  CHECK(s.count(FeatureKind::categorical) == 3);
  CHECK(s.count(FeatureKind::boolean) == 4);
  CHECK(s.count(FeatureKind::continuous) == 34);
  CHECK(s.raw_columns() == 43);
  CHECK(s.names(FeatureKind::boolean) ==
        std::vector<std::string>{"land", "logged_in", "is_host_login", "is_guest_login"});
}

TEST_CASE("parse: a 43-field line yields one record without the difficulty column") {
  const auto records = parse_text(row("tcp", "http", "SF", "neptune") + "\n");
  REQUIRE(records.size() == 1);
  const auto& r = records[0];
  CHECK(r.label == "neptune");
  CHECK(r.categorical == std::vector<std::string>{"tcp", "http", "SF"});
  CHECK(r.boolean.size() == 4);
  CHECK(r.boolean[1] == 1);
  CHECK(r.continuous.size() == 34);
  CHECK(r.continuous[1] == 100.0);  // src_bytes
  CHECK(r.categorical.size() + r.boolean.size() + r.continuous.size() == 41);
}

TEST_CASE("parse: 42-field line is an error naming the line") {
  std::string bad = row("tcp", "http", "SF", "normal");
  bad = bad.substr(0, bad.rfind(','));  // drop difficulty
  const std::string text = row("tcp", "http", "SF", "normal") + "\n" + bad + "\n";
  try {
    parse_text(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("parse: non-numeric continuous and non-boolean fields are errors") {
  std::string text = row("tcp", "http", "SF", "normal");
  text.replace(text.find(",100,"), 5, ",abc,");
  CHECK_THROWS_AS(parse_text(text), ParseError);
  CHECK_THROWS_AS(parse_text(row("tcp", "http", "SF", "normal", 100, 2)), ParseError);
}

TEST_CASE("parse: unknown labels are rejected, CRLF and blank lines tolerated") {
  CHECK_THROWS_AS(parse_text(row("tcp", "http", "SF", "not_an_attack")), ParseError);
  const auto recs = parse_text(row("tcp", "http", "SF", "normal") + "\r\n\n" + row("udp", "dns", "SF", "smurf") + "\r\n");
  CHECK(recs.size() == 2);
  CHECK(recs[1].label == "smurf");
}

TEST_CASE("parse: record count equals the file's line count") {
  const auto dir = testing::scratch_dir("dataset-lines");
  const auto files = testing::write_synthetic_nslkdd(dir, {300, 120, 80, 90, 3});
  std::ifstream in(files.train);
  const auto lines = std::count(std::istreambuf_iterator<char>(in), {}, '\n');
  CHECK(parse_nslkdd(files.train).size() == static_cast<std::size_t>(lines));
}

TEST_CASE("attack categories") {
  CHECK(map_attack_category("smurf") == AttackCategory::dos);
  CHECK(map_attack_category("httptunnel") == AttackCategory::u2r);
  CHECK(map_attack_category("normal") == AttackCategory::normal);
  CHECK(map_attack_category("satan") == AttackCategory::probe);
  CHECK(map_attack_category("snmpguess") == AttackCategory::r2l);
  CHECK_THROWS_AS(map_attack_category("Normal"), ParseError);
  CHECK_THROWS_AS(map_attack_category(""), ParseError);

  std::set<std::string_view> names;
  for (const auto& a : attack_table()) {
    CHECK(a.category != AttackCategory::normal);
    CHECK(map_attack_category(a.label) == a.category);
    names.insert(a.label);
  }
  CHECK(names.size() == attack_table().size());  // each name maps once
  CHECK(attack_table().size() == 39);
}

TEST_CASE("split: partitions by label and keeps attack provenance") {
  auto train = parse_text(row("tcp", "http", "SF", "normal") + "\n" + row("tcp", "private", "S0", "neptune"));
  auto test = parse_text(row("tcp", "http", "SF", "normal") + "\n" + row("icmp", "ecr_i", "SF", "smurf"));
  const auto split = split_dataset(train, test);
  CHECK(split.x_train.size() == 1);
  CHECK(split.x_test.size() == 1);
  REQUIRE(split.x_attack.size() == 2);
  CHECK(split.x_attack[0].label == "neptune");
  CHECK(split.attack_source[0] == Source::train_file);
  CHECK(split.attack_source[1] == Source::test_file);

  SUBCASE("all-normal inputs give an empty attack set") {
    const auto s = split_dataset(parse_text(row("tcp", "http", "SF", "normal")),
                                 parse_text(row("tcp", "http", "SF", "normal")));
    CHECK(s.x_attack.empty());
  }
  SUBCASE("no normal training rows is an error") {
    CHECK_THROWS_AS(split_dataset(parse_text(row("tcp", "http", "SF", "smurf")), {}), ParseError);
  }
}

TEST_CASE("split on generated files matches independently counted labels") {
  const auto dir = testing::scratch_dir("dataset-split");
  const auto files = testing::write_synthetic_nslkdd(dir, {400, 150, 120, 110, 5});
  auto count_labels = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t normal = 0, other = 0;
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      const auto prev = line.rfind(',', last - 1);
      (line.substr(prev + 1, last - prev - 1) == "normal" ? normal : other)++;
    }
    return std::pair{normal, other};
  };
  const auto [train_n, train_a] = count_labels(files.train);
  const auto [test_n, test_a] = count_labels(files.test);
  auto train = parse_nslkdd(files.train);
  auto test = parse_nslkdd(files.test);
  const std::size_t total = train.size() + test.size();
  const auto split = split_dataset(std::move(train), std::move(test));
  CHECK(split.x_train.size() == train_n);
  CHECK(split.x_test.size() == test_n);
  CHECK(split.x_attack.size() == train_a + test_a);
  CHECK(split.x_train.size() + split.x_test.size() + split.x_attack.size() == total);
  for (const auto& r : split.x_train) CHECK(r.label == "normal");
  for (const auto& r : split.x_test) CHECK(r.label == "normal");
  for (const auto& r : split.x_attack) CHECK(r.label != "normal");
}

TEST_CASE("preprocessor: vocabularies, standardization and std floor") {
  const auto dir = testing::scratch_dir("dataset-pre");
  const auto files = testing::write_synthetic_nslkdd(dir, {500, 200, 150, 150, 11});
  auto train = parse_nslkdd(files.train);
  auto test = parse_nslkdd(files.test);
  std::vector<Record> all(train);
  all.insert(all.end(), test.begin(), test.end());
  const auto split = split_dataset(train, test);
  const auto pre = Preprocessor::fit(split.x_train, all);

  // Independent enumeration of the protocol tokens.
  std::set<std::string> protocols;
  for (const auto& r : all) protocols.insert(r.categorical[0]);
  CHECK(pre.vocabularies()[0] == std::vector<std::string>(protocols.begin(), protocols.end()));
  CHECK(pre.vocabularies()[0] == std::vector<std::string>{"icmp", "tcp", "udp"});
  for (const auto& v : pre.vocabularies()) CHECK(std::is_sorted(v.begin(), v.end()));

  const auto& L = pre.layout();
  CHECK(L.width() == L.categorical_width() + 4 + 34);
  CHECK(L.categorical_sizes[0] == 3);

  // num_outbound_cmds is constant zero in the generated data.
  const auto names = nslkdd_schema().names(FeatureKind::continuous);
  const auto col = static_cast<std::size_t>(std::find(names.begin(), names.end(), "num_outbound_cmds") - names.begin());
  CHECK(pre.stds()[col] == kStdFloor);
  for (const double s : pre.stds()) CHECK(s >= kStdFloor);

  const Matrix x = pre.transform(split.x_train);
  const auto n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < L.continuous_count; ++c) {
    const auto column = x.col(static_cast<Eigen::Index>(L.continuous_offset() + c));
    const double mean = column.sum() / n;
    const double sd = std::sqrt((column.array() - mean).square().sum() / n);
    CHECK(std::abs(mean) < 1e-9);
    if (pre.stds()[c] == kStdFloor) {
      CHECK(sd == 0.0);
      CHECK(column.cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t g = 0; g < L.categorical_sizes.size(); ++g)
      CHECK(x.row(r).segment(static_cast<Eigen::Index>(L.categorical_offset(g)),
                             static_cast<Eigen::Index>(L.categorical_sizes[g])).sum() == 1.0);
    for (std::size_t b = 0; b < L.boolean_count; ++b) {
      const double v = x(r, static_cast<Eigen::Index>(L.boolean_offset() + b));
      CHECK((v == 0.0 || v == 1.0));
    }
  }
}

TEST_CASE("transform: one-hot, unknown tokens and train-mean values") {
  auto train = parse_text(row("tcp", "http", "SF", "normal", 100) + "\n" + row("udp", "dns", "SF", "normal", 300) +
                          "\n" + row("icmp", "eco_i", "REJ", "normal", 200));
  const auto pre = Preprocessor::fit(train, train);
  const auto fv = pre.transform(train[0]);
  CHECK(fv.layout->width() == fv.values.size());
  CHECK(std::vector<double>(fv.values.begin(), fv.values.begin() + 3) == std::vector<double>{0, 1, 0});

  auto unseen = train[0];
  unseen.categorical[1] = "tftp_u";
  const auto uv = pre.transform(unseen);
  const auto& L = pre.layout();
  double service_sum = 0.0;
  for (std::size_t j = 0; j < L.categorical_sizes[1]; ++j) service_sum += uv.values[L.categorical_offset(1) + j];
  CHECK(service_sum == 0.0);

  // src_bytes column: the train mean is 200.
  auto at_mean = train[0];
  at_mean.continuous[1] = 200;
  CHECK(pre.transform(at_mean).values[L.continuous_offset() + 1] == 0.0);
}

TEST_CASE("transform: a test-only service encodes as an all-zero block") {
  const auto dir = testing::scratch_dir("dataset-unseen");
  const auto files = testing::write_synthetic_nslkdd(dir, {300, 100, 200, 50, 13});
  auto train = parse_nslkdd(files.train);
  auto test = parse_nslkdd(files.test);
  std::set<std::string> train_services;
  for (const auto& r : train) train_services.insert(r.categorical[1]);
  const auto it = std::find_if(test.begin(), test.end(),
                               [&](const Record& r) { return !train_services.count(r.categorical[1]); });
  REQUIRE(it != test.end());
  // Fit on train only so the service is outside the vocabulary.
  const auto pre = Preprocessor::fit(split_dataset(train, {}).x_train, train);
  const auto v = pre.transform(*it);
  const auto& L = pre.layout();
  for (std::size_t j = 0; j < L.categorical_sizes[1]; ++j) CHECK(v.values[L.categorical_offset(1) + j] == 0.0);
}

TEST_CASE("property: argmax of one-hot blocks recovers categorical tokens") {
  const auto dir = testing::scratch_dir("dataset-roundtrip");
  const auto files = testing::write_synthetic_nslkdd(dir, {200, 100, 100, 100, 17});
  auto train = parse_nslkdd(files.train);
  auto test = parse_nslkdd(files.test);
  std::vector<Record> all(train);
  all.insert(all.end(), test.begin(), test.end());
  const auto pre = Preprocessor::fit(split_dataset(train, test).x_train, all);
  const auto& L = pre.layout();
  for (const auto& r : all) {
    const auto v = pre.transform(r);
    for (std::size_t g = 0; g < L.categorical_sizes.size(); ++g) {
      const auto begin = v.values.begin() + static_cast<std::ptrdiff_t>(L.categorical_offset(g));
      const auto arg = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(L.categorical_sizes[g])) - begin;
      CHECK(pre.vocabularies()[g][static_cast<std::size_t>(arg)] == r.categorical[g]);
    }
  }
}

TEST_CASE("manifest and archive round-trip") {
  const auto dir = testing::scratch_dir("dataset-archive");
  const auto files = testing::write_synthetic_nslkdd(dir, {200, 80, 60, 70, 19});
  auto train = parse_nslkdd(files.train);
  auto test = parse_nslkdd(files.test);
  std::vector<Record> all(train);
  all.insert(all.end(), test.begin(), test.end());
  const auto split = split_dataset(train, test);
  const auto pre = Preprocessor::fit(split.x_train, all);

  const auto restored = Preprocessor::from_manifest(pre.manifest());
  CHECK(restored.layout() == pre.layout());
  CHECK(restored.transform(split.x_attack[0]).values == pre.transform(split.x_attack[0]).values);

  auto encoded = encode_split(split, pre);
  const std::string before = encoded.digest;
  save_archive(dir / "split.bin", encoded);
  CHECK(encoded.digest == before);
  const auto loaded = load_archive(dir / "split.bin");
  CHECK(loaded.digest == before);
  CHECK(loaded.layout == encoded.layout);
  CHECK(loaded.train.x == encoded.train.x);
  CHECK(loaded.attack.x == encoded.attack.x);
  CHECK(loaded.attack.labels == encoded.attack.labels);
  CHECK(loaded.attack.sources == encoded.attack.sources);
  CHECK(loaded.test.size() == split.x_test.size());

  SUBCASE("truncated archive") {
    std::filesystem::resize_file(dir / "split.bin", std::filesystem::file_size(dir / "split.bin") - 100);
    CHECK_THROWS_AS(load_archive(dir / "split.bin"), FormatError);
  }
  SUBCASE("corrupted archive") {
    std::fstream f(dir / "split.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_AS(load_archive(dir / "split.bin"), FormatError);
  }
}
