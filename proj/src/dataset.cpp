#include "nslvae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "nslvae/error.hpp"

namespace nslvae {

void to_json(nlohmann::json& j, const Layout& layout) {
  j = nlohmann::json{{"categorical_sizes", layout.categorical_sizes},
                     {"boolean_count", layout.boolean_count},
                     {"continuous_count", layout.continuous_count},
                     {"width", layout.width()}};
}

void from_json(const nlohmann::json& j, Layout& layout) {
  j.at("categorical_sizes").get_to(layout.categorical_sizes);
  j.at("boolean_count").get_to(layout.boolean_count);
  j.at("continuous_count").get_to(layout.continuous_count);
}

}  // namespace nslvae

namespace nslvae::dataset {

namespace {

using K = FeatureKind;

Schema make_nslkdd_schema() {
  return Schema{{
      {"duration", K::continuous},
      {"protocol_type", K::categorical},
      {"service", K::categorical},
      {"flag", K::categorical},
      {"src_bytes", K::continuous},
      {"dst_bytes", K::continuous},
      {"land", K::boolean},
      {"wrong_fragment", K::continuous},
      {"urgent", K::continuous},
      {"hot", K::continuous},
      {"num_failed_logins", K::continuous},
      {"logged_in", K::boolean},
      {"num_compromised", K::continuous},
      {"root_shell", K::continuous},
      {"su_attempted", K::continuous},
      {"num_root", K::continuous},
      {"num_file_creations", K::continuous},
      {"num_shells", K::continuous},
      {"num_access_files", K::continuous},
      {"num_outbound_cmds", K::continuous},
      {"is_host_login", K::boolean},
      {"is_guest_login", K::boolean},
      {"count", K::continuous},
      {"srv_count", K::continuous},
      {"serror_rate", K::continuous},
      {"srv_serror_rate", K::continuous},
      {"rerror_rate", K::continuous},
      {"srv_rerror_rate", K::continuous},
      {"same_srv_rate", K::continuous},
      {"diff_srv_rate", K::continuous},
      {"srv_diff_host_rate", K::continuous},
      {"dst_host_count", K::continuous},
      {"dst_host_srv_count", K::continuous},
      {"dst_host_same_srv_rate", K::continuous},
      {"dst_host_diff_srv_rate", K::continuous},
      {"dst_host_same_src_port_rate", K::continuous},
      {"dst_host_srv_diff_host_rate", K::continuous},
      {"dst_host_serror_rate", K::continuous},
      {"dst_host_srv_serror_rate", K::continuous},
      {"dst_host_rerror_rate", K::continuous},
      {"dst_host_srv_rerror_rate", K::continuous},
  }};
}

using C = AttackCategory;

constexpr AttackName kAttackTable[] = {
    // DoS
    {"neptune", C::dos}, {"smurf", C::dos}, {"back", C::dos}, {"teardrop", C::dos},
    {"pod", C::dos}, {"land", C::dos}, {"apache2", C::dos}, {"mailbomb", C::dos},
    {"processtable", C::dos}, {"udpstorm", C::dos}, {"worm", C::dos},
    // Probe
    {"ipsweep", C::probe}, {"nmap", C::probe}, {"portsweep", C::probe}, {"satan", C::probe},
    {"mscan", C::probe}, {"saint", C::probe},
    // U2R
    {"buffer_overflow", C::u2r}, {"loadmodule", C::u2r}, {"perl", C::u2r}, {"rootkit", C::u2r},
    {"httptunnel", C::u2r}, {"ps", C::u2r}, {"sqlattack", C::u2r}, {"xterm", C::u2r},
    // R2L
    {"ftp_write", C::r2l}, {"guess_passwd", C::r2l}, {"imap", C::r2l}, {"multihop", C::r2l},
    {"phf", C::r2l}, {"spy", C::r2l}, {"warezclient", C::r2l}, {"warezmaster", C::r2l},
    {"snmpgetattack", C::r2l}, {"snmpguess", C::r2l}, {"xlock", C::r2l}, {"xsnoop", C::r2l},
    // Present in KDDTest+ but missing from the published category table.
    {"named", C::r2l}, {"sendmail", C::r2l},
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::size_t Schema::count(FeatureKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(features.begin(), features.end(), [&](const Column& c) { return c.kind == kind; }));
}

std::vector<std::string> Schema::names(FeatureKind kind) const {
  std::vector<std::string> out;
  for (const auto& c : features)
    if (c.kind == kind) out.push_back(c.name);
  return out;
}

const Schema& nslkdd_schema() {
  static const Schema schema = make_nslkdd_schema();
  return schema;
}

std::string_view to_string(AttackCategory category) {
  switch (category) {
    case C::normal: return "normal";
    case C::dos: return "DoS";
    case C::probe: return "Probe";
    case C::u2r: return "U2R";
    case C::r2l: return "R2L";
  }
  return "?";
}

AttackCategory category_from_string(std::string_view name) {
  for (C c : {C::normal, C::dos, C::probe, C::u2r, C::r2l})
    if (to_string(c) == name) return c;
  throw ParseError(fmt::format("unknown attack category '{}'", name));
}

std::span<const AttackName> attack_table() { return kAttackTable; }

AttackCategory map_attack_category(std::string_view label) {
  if (label == "normal") return C::normal;
  for (const auto& entry : kAttackTable)
    if (entry.label == label) return entry.category;
  throw ParseError(fmt::format("unknown attack label '{}'", label));
}

std::string_view to_string(Source source) {
  return source == Source::train_file ? "train" : "test";
}

Source source_from_string(std::string_view name) {
  if (name == "train") return Source::train_file;
  if (name == "test") return Source::test_file;
  throw ParseError(fmt::format("unknown source '{}'", name));
}

std::vector<Record> parse_nslkdd(std::istream& in, const Schema& schema,
                                 std::string_view source_name) {
  std::vector<Record> records;
  const std::size_t expected = schema.raw_columns();
  const std::size_t n_cat = schema.count(K::categorical);
  const std::size_t n_bool = schema.count(K::boolean);
  const std::size_t n_cont = schema.count(K::continuous);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view);
    if (fields.size() != expected) {
      throw ParseError(fmt::format("{}:{}: expected {} fields, found {}", source_name, line_no,
                                   expected, fields.size()));
    }
    Record r;
    r.categorical.reserve(n_cat);
    r.boolean.reserve(n_bool);
    r.continuous.reserve(n_cont);
    for (std::size_t i = 0; i < schema.features.size(); ++i) {
      const std::string_view field = trim(fields[i]);
      const Column& col = schema.features[i];
      switch (col.kind) {
        case K::categorical:
          if (field.empty())
            throw ParseError(fmt::format("{}:{}: empty {}", source_name, line_no, col.name));
          r.categorical.emplace_back(field);
          break;
        case K::boolean:
          if (field == "0") {
            r.boolean.push_back(0);
          } else if (field == "1") {
            r.boolean.push_back(1);
          } else {
            throw ParseError(fmt::format("{}:{}: {} is not boolean: '{}'", source_name, line_no,
                                         col.name, field));
          }
          break;
        case K::continuous: {
          double v = 0.0;
          const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
          if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
            throw ParseError(fmt::format("{}:{}: {} is not numeric: '{}'", source_name, line_no,
                                         col.name, field));
          }
          r.continuous.push_back(v);
          break;
        }
      }
    }
    r.label = std::string(trim(fields[schema.features.size()]));
    // Validates the label; the difficulty column is not kept.
    try {
      map_attack_category(r.label);
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("{}:{}: {}", source_name, line_no, e.what()));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Record> parse_nslkdd(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return parse_nslkdd(in, schema, path.filename().string());
}

DatasetSplit split_dataset(std::vector<Record> train_records, std::vector<Record> test_records) {
  DatasetSplit split;
  auto route = [&](std::vector<Record>& records, Source source, std::vector<Record>& normals) {
    for (auto& r : records) {
      if (map_attack_category(r.label) == C::normal) {
        normals.push_back(std::move(r));
      } else {
        split.x_attack.push_back(std::move(r));
        split.attack_source.push_back(source);
      }
    }
  };
  route(train_records, Source::train_file, split.x_train);
  route(test_records, Source::test_file, split.x_test);
  if (split.x_train.empty()) throw ParseError("training file contains no normal records");
  return split;
}

Preprocessor Preprocessor::fit(std::span<const Record> x_train, std::span<const Record> all_records,
                               const Schema& schema) {
  if (x_train.empty()) throw ParseError("cannot fit preprocessor on an empty training set");
  Preprocessor p;
  p.schema_ = schema;
  const std::size_t n_cat = schema.count(K::categorical);
  const std::size_t n_bool = schema.count(K::boolean);
  const std::size_t n_cont = schema.count(K::continuous);

  std::vector<std::set<std::string>> tokens(n_cat);
  auto collect = [&](std::span<const Record> records) {
    for (const auto& r : records)
      for (std::size_t g = 0; g < n_cat; ++g) tokens[g].insert(r.categorical[g]);
  };
  collect(all_records);
  collect(x_train);
  p.vocab_.resize(n_cat);
  for (std::size_t g = 0; g < n_cat; ++g) p.vocab_[g].assign(tokens[g].begin(), tokens[g].end());

  // Two-pass mean/variance (population std) over x_train.
  const double n = static_cast<double>(x_train.size());
  p.mean_.assign(n_cont, 0.0);
  p.std_.assign(n_cont, 0.0);
  for (const auto& r : x_train)
    for (std::size_t c = 0; c < n_cont; ++c) p.mean_[c] += r.continuous[c];
  for (auto& m : p.mean_) m /= n;
  for (const auto& r : x_train)
    for (std::size_t c = 0; c < n_cont; ++c) {
      const double d = r.continuous[c] - p.mean_[c];
      p.std_[c] += d * d;
    }
  for (auto& s : p.std_) s = std::max(std::sqrt(s / n), kStdFloor);

  Layout layout;
  for (const auto& v : p.vocab_) layout.categorical_sizes.push_back(v.size());
  layout.boolean_count = n_bool;
  layout.continuous_count = n_cont;
  p.layout_ = std::make_shared<const Layout>(std::move(layout));
  return p;
}

void Preprocessor::transform_into(const Record& record, std::span<double> out) const {
  const Layout& layout = *layout_;
  if (out.size() != layout.width())
    throw ShapeError(fmt::format("transform: output width {} != layout width {}", out.size(),
                                 layout.width()));
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t offset = 0;
  for (std::size_t g = 0; g < vocab_.size(); ++g) {
    const auto& vocab = vocab_[g];
    const auto it = std::lower_bound(vocab.begin(), vocab.end(), record.categorical[g]);
    if (it != vocab.end() && *it == record.categorical[g])
      out[offset + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
    offset += vocab.size();
  }
  for (std::size_t b = 0; b < layout.boolean_count; ++b)
    out[offset + b] = record.boolean[b] != 0 ? 1.0 : 0.0;
  offset += layout.boolean_count;
  for (std::size_t c = 0; c < layout.continuous_count; ++c)
    out[offset + c] = (record.continuous[c] - mean_[c]) / std_[c];
}

FeatureVector Preprocessor::transform(const Record& record) const {
  FeatureVector fv{std::vector<double>(layout_->width()), layout_};
  transform_into(record, fv.values);
  return fv;
}

Matrix Preprocessor::transform(std::span<const Record> records) const {
  Matrix m(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(layout_->width()));
  for (std::size_t i = 0; i < records.size(); ++i)
    transform_into(records[i], std::span<double>(m.row(static_cast<Eigen::Index>(i)).data(),
                                                 layout_->width()));
  return m;
}

nlohmann::json Preprocessor::manifest() const {
  nlohmann::json j;
  j["format"] = "nslvae-preprocessor";
  j["version"] = 1;
  j["std_floor"] = kStdFloor;
  j["layout"] = *layout_;
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema_.features) {
    const char* kind = c.kind == K::categorical ? "categorical"
                       : c.kind == K::boolean   ? "boolean"
                                                : "continuous";
    cols.push_back({{"name", c.name}, {"kind", kind}});
  }
  j["schema"] = cols;
  const auto cat_names = schema_.names(K::categorical);
  nlohmann::json vocab = nlohmann::json::array();
  for (std::size_t g = 0; g < vocab_.size(); ++g)
    vocab.push_back({{"feature", cat_names[g]}, {"tokens", vocab_[g]}});
  j["vocabularies"] = vocab;
  j["boolean_features"] = schema_.names(K::boolean);
  j["continuous_features"] = schema_.names(K::continuous);
  j["means"] = mean_;
  j["stds"] = std_;
  return j;
}

Preprocessor Preprocessor::from_manifest(const nlohmann::json& j) {
  if (j.value("format", "") != "nslvae-preprocessor")
    throw FormatError("not a preprocessor manifest");
  Preprocessor p;
  for (const auto& c : j.at("schema")) {
    const auto kind = c.at("kind").get<std::string>();
    p.schema_.features.push_back(
        {c.at("name").get<std::string>(), kind == "categorical" ? K::categorical
                                          : kind == "boolean"   ? K::boolean
                                                                : K::continuous});
  }
  for (const auto& v : j.at("vocabularies")) p.vocab_.push_back(v.at("tokens").get<std::vector<std::string>>());
  j.at("means").get_to(p.mean_);
  j.at("stds").get_to(p.std_);
  p.layout_ = std::make_shared<const Layout>(j.at("layout").get<Layout>());
  return p;
}

EncodedSplit encode_split(const DatasetSplit& split, const Preprocessor& preprocessor) {
  EncodedSplit out;
  out.layout = preprocessor.layout();
  out.manifest = preprocessor.manifest();
  auto encode = [&](const std::vector<Record>& records, EncodedSet& set, Source default_source,
                    const std::vector<Source>* sources) {
    set.x = preprocessor.transform(records);
    set.labels.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      set.labels.push_back(records[i].label);
      set.sources.push_back(sources ? (*sources)[i] : default_source);
    }
  };
  encode(split.x_train, out.train, Source::train_file, nullptr);
  encode(split.x_test, out.test, Source::test_file, nullptr);
  encode(split.x_attack, out.attack, Source::train_file, &split.attack_source);
  out.digest = compute_digest(out);
  return out;
}

}  // namespace nslvae::dataset
