#include <fstream>
#include <iterator>
#include <map>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "nslvae/dataset.hpp"

namespace nslvae::detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("short write to {}", tmp));
  }
  std::filesystem::rename(tmp, path);
}

std::pair<std::string_view, std::string> verify_sealed(std::string_view file,
                                                       const std::string& context) {
  if (file.size() < kDigestHexLength) throw FormatError(context + ": truncated file");
  const std::string_view body = file.substr(0, file.size() - kDigestHexLength);
  const std::string stored(file.substr(body.size()));
  const std::string actual = sha256_hex(body);
  if (stored != actual) throw FormatError(context + ": digest mismatch (corrupt or truncated)");
  return {body, stored};
}

}  // namespace nslvae::detail

namespace nslvae::dataset {

namespace {

constexpr char kMagic[8] = {'N', 'S', 'L', 'V', 'A', 'E', 'D', 'S'};
constexpr std::uint32_t kArchiveVersion = 1;

detail::ByteWriter serialize(const EncodedSplit& split) {
  std::map<std::string, std::uint16_t> label_index;
  for (const auto* set : {&split.train, &split.test, &split.attack})
    for (const auto& l : set->labels) label_index.emplace(l, 0);
  std::vector<std::string> label_table;
  for (auto& [label, idx] : label_index) {
    idx = static_cast<std::uint16_t>(label_table.size());
    label_table.push_back(label);
  }

  nlohmann::json header;
  header["layout"] = split.layout;
  header["manifest"] = split.manifest;
  header["rows"] = {{"train", split.train.size()},
                    {"test", split.test.size()},
                    {"attack", split.attack.size()}};
  header["labels"] = label_table;
  const std::string header_text = header.dump();

  detail::ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kArchiveVersion);
  w.u64(header_text.size());
  w.text(header_text);
  const std::size_t width = split.layout.width();
  for (const auto* set : {&split.train, &split.test, &split.attack}) {
    if (static_cast<std::size_t>(set->x.cols()) != width && set->size() != 0)
      throw ShapeError("archive: matrix width does not match layout");
    w.f64s(std::span<const double>(set->x.data(), set->size() * width));
    for (const auto& l : set->labels) w.u16(label_index.at(l));
    for (const auto s : set->sources) w.u8(static_cast<std::uint8_t>(s));
  }
  return w;
}

}  // namespace

std::string compute_digest(const EncodedSplit& split) { return sha256_hex(serialize(split).buffer()); }

void save_archive(const std::filesystem::path& path, EncodedSplit& split) {
  auto w = serialize(split);
  split.digest = w.seal();
  detail::write_file(path, w.buffer());
}

EncodedSplit load_archive(const std::filesystem::path& path) {
  const std::string file = detail::read_file(path);
  const std::string ctx = path.filename().string();
  const auto [body, digest] = detail::verify_sealed(file, ctx);
  detail::ByteReader r(body, ctx);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(ctx + ": not an encoded split archive");
  const auto version = r.u32();
  if (version != kArchiveVersion)
    throw FormatError(fmt::format("{}: archive version {} unsupported (expected {})", ctx, version,
                                  kArchiveVersion));
  const auto header = nlohmann::json::parse(r.text(r.u64()));

  EncodedSplit split;
  split.layout = header.at("layout").get<Layout>();
  split.manifest = header.at("manifest");
  const auto labels = header.at("labels").get<std::vector<std::string>>();
  const std::size_t width = split.layout.width();
  const auto& rows = header.at("rows");
  for (auto [set, name] : {std::pair{&split.train, "train"}, std::pair{&split.test, "test"},
                           std::pair{&split.attack, "attack"}}) {
    const auto n = rows.at(name).get<std::size_t>();
    set->x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    r.f64s(std::span<double>(set->x.data(), n * width));
    set->labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = r.u16();
      if (idx >= labels.size()) throw FormatError(ctx + ": label index out of range");
      set->labels.push_back(labels[idx]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = r.u8();
      if (s > 1) throw FormatError(ctx + ": bad source tag");
      set->sources.push_back(static_cast<Source>(s));
    }
  }
  if (r.remaining() != 0) throw FormatError(ctx + ": trailing bytes");
  split.digest = digest;
  return split;
}

}  // namespace nslvae::dataset
