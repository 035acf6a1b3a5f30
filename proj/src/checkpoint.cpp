#include <fmt/format.h>

#include "binary_io.hpp"
#include "nslvae/model.hpp"

namespace nslvae::model {

namespace {
constexpr char kMagic[8] = {'N', 'S', 'L', 'V', 'A', 'E', 'C', 'K'};
}

void save_checkpoint(const std::filesystem::path& path, const BetaVae& model,
                     const nlohmann::json& manifest) {
  if (!model.all_finite()) throw TrainError("refusing to checkpoint a model with non-finite parameters");
  nlohmann::json header;
  header["config"] = model.config();
  header["layout"] = model.layout();
  header["beta"] = model.config().beta;
  header["seed"] = model.config().seed;
  header["manifest"] = manifest;
  header["parameter_digest"] = model.digest();
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.text(text);
  std::uint64_t blocks = 0;
  model.params().for_each_layer([&](const std::string&, const nn::DenseLayer&) { blocks += 2; });
  w.u64(blocks);
  model.params().for_each_layer([&](const std::string&, const nn::DenseLayer& l) {
    w.u64(static_cast<std::uint64_t>(l.weights.rows()));
    w.u64(static_cast<std::uint64_t>(l.weights.cols()));
    w.f64s(std::span<const double>(l.weights.data(), static_cast<std::size_t>(l.weights.size())));
    w.u64(static_cast<std::uint64_t>(l.bias.size()));
    w.u64(1);
    w.f64s(std::span<const double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
  });
  w.seal();
  detail::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = detail::read_file(path);
  const std::string ctx = path.filename().string();
  const auto [body, digest] = detail::verify_sealed(file, ctx);
  detail::ByteReader r(body, ctx);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(ctx + ": not a checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(fmt::format("{}: checkpoint version {} unsupported (expected {})", ctx, version,
                                  kCheckpointVersion));
  const auto header = nlohmann::json::parse(r.text(r.u64()));
  const auto config = header.at("config").get<ModelConfig>();
  const auto layout = header.at("layout").get<Layout>();
  BetaVae model(layout, config);

  std::uint64_t expected_blocks = 0;
  model.params().for_each_layer([&](const std::string&, nn::DenseLayer&) { expected_blocks += 2; });
  if (r.u64() != expected_blocks) throw FormatError(ctx + ": parameter block count mismatch");
  model.params().for_each_layer([&](const std::string& name, nn::DenseLayer& l) {
    auto read_block = [&](double* data, Eigen::Index rows, Eigen::Index cols) {
      const auto fr = r.u64();
      const auto fc = r.u64();
      if (fr != static_cast<std::uint64_t>(rows) || fc != static_cast<std::uint64_t>(cols))
        throw FormatError(fmt::format("{}: block {} has shape {}x{}, expected {}x{}", ctx, name, fr, fc,
                                      rows, cols));
      r.f64s(std::span<double>(data, static_cast<std::size_t>(rows * cols)));
    };
    read_block(l.weights.data(), l.weights.rows(), l.weights.cols());
    read_block(l.bias.data(), l.bias.size(), 1);
  });
  if (r.remaining() != 0) throw FormatError(ctx + ": trailing bytes");
  if (header.value("parameter_digest", "") != model.digest())
    throw FormatError(ctx + ": parameter digest mismatch");
  return {std::move(model), header.value("manifest", nlohmann::json::object()), config};
}

}  // namespace nslvae::model
