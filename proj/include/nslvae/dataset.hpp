#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nslvae/layout.hpp"

namespace nslvae::dataset {

enum class FeatureKind { categorical, boolean, continuous };

struct Column {
  std::string name;
  FeatureKind kind;
};

// Feature columns of a raw file in file order. Every row carries these
// features followed by the label and the difficulty score.
struct Schema {
  std::vector<Column> features;

  std::size_t count(FeatureKind kind) const;
  std::vector<std::string> names(FeatureKind kind) const;
  std::size_t raw_columns() const { return features.size() + 2; }
};

// The 41-feature NSL-KDD column order.
const Schema& nslkdd_schema();

// One parsed row. Feature values are grouped by kind, each group in schema
// order. The difficulty column is dropped at parse time.
struct Record {
  std::vector<std::string> categorical;
  std::vector<std::uint8_t> boolean;
  std::vector<double> continuous;
  std::string label;
};

enum class AttackCategory : std::uint8_t { normal, dos, probe, u2r, r2l };

inline constexpr AttackCategory kAttackCategories[] = {
    AttackCategory::dos, AttackCategory::probe, AttackCategory::u2r, AttackCategory::r2l};

std::string_view to_string(AttackCategory category);
AttackCategory category_from_string(std::string_view name);

// Throws ParseError for labels outside the attack table.
AttackCategory map_attack_category(std::string_view label);

struct AttackName {
  std::string_view label;
  AttackCategory category;
};
// Every known attack label with its category.
std::span<const AttackName> attack_table();

enum class Source : std::uint8_t { train_file, test_file };
std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

struct DatasetSplit {
  std::vector<Record> x_train;   // normal rows of the train file
  std::vector<Record> x_test;    // normal rows of the test file
  std::vector<Record> x_attack;  // attack rows of both files
  std::vector<Source> attack_source;
};

std::vector<Record> parse_nslkdd(const std::filesystem::path& path,
                                 const Schema& schema = nslkdd_schema());
std::vector<Record> parse_nslkdd(std::istream& in, const Schema& schema,
                                 std::string_view source_name);

DatasetSplit split_dataset(std::vector<Record> train_records, std::vector<Record> test_records);

inline constexpr double kStdFloor = 1e-8;

// Encoded sample: values in layout order.
struct FeatureVector {
  std::vector<double> values;
  std::shared_ptr<const Layout> layout;
};

class Preprocessor {
 public:
  // Vocabularies come from all_records; means and stds from x_train only.
  static Preprocessor fit(std::span<const Record> x_train, std::span<const Record> all_records,
                          const Schema& schema = nslkdd_schema());
  static Preprocessor from_manifest(const nlohmann::json& manifest);

  const Layout& layout() const { return *layout_; }
  std::shared_ptr<const Layout> shared_layout() const { return layout_; }

  FeatureVector transform(const Record& record) const;
  void transform_into(const Record& record, std::span<double> out) const;
  Matrix transform(std::span<const Record> records) const;

  const std::vector<std::vector<std::string>>& vocabularies() const { return vocab_; }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& stds() const { return std_; }

  nlohmann::json manifest() const;

 private:
  Schema schema_;
  std::vector<std::vector<std::string>> vocab_;
  std::vector<double> mean_;
  std::vector<double> std_;
  std::shared_ptr<const Layout> layout_;
};

// Encoded rows of one split part, with labels carried alongside.
struct EncodedSet {
  Matrix x;
  std::vector<std::string> labels;
  std::vector<Source> sources;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

struct EncodedSplit {
  Layout layout;
  nlohmann::json manifest;
  EncodedSet train;
  EncodedSet test;
  EncodedSet attack;
  std::string digest;  // SHA-256 of the archive contents; set by save/load
};

EncodedSplit encode_split(const DatasetSplit& split, const Preprocessor& preprocessor);

// Content digest of an encoded split, independent of any file.
std::string compute_digest(const EncodedSplit& split);

// Versioned binary archive: magic, version, JSON header (layout, manifest,
// row counts, label table), little-endian float64 matrices, per-row label
// and source indices, trailing SHA-256.
void save_archive(const std::filesystem::path& path, EncodedSplit& split);
EncodedSplit load_archive(const std::filesystem::path& path);

}  // namespace nslvae::dataset
