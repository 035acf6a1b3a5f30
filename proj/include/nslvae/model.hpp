#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslvae/layout.hpp"
#include "nslvae/nn.hpp"

namespace nslvae::model {

// How each loss component reduces over the features of its type before the
// three components are added: `sum` adds per-feature terms, `mean` divides
// each component by its feature count (group count for categoricals).
enum class FeatureReduction { sum, mean };

struct ModelConfig {
  std::size_t input_width = 0;
  std::vector<std::size_t> encoder_hidden{64, 32, 16};
  std::size_t latent_dim = 8;
  std::vector<std::size_t> decoder_hidden{16, 32, 64};
  double beta = 0.0;
  double lr = 1e-3;
  std::size_t batch_size = 2048;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  FeatureReduction reduction = FeatureReduction::sum;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Encoder phi (hidden stack + mu/logvar heads) and decoder theta (hidden
// stack + output layer). Gradients share this shape.
struct Parameters {
  std::vector<nn::DenseLayer> encoder;
  nn::DenseLayer mu_head;
  nn::DenseLayer logvar_head;
  std::vector<nn::DenseLayer> decoder;
  nn::DenseLayer output;

  // Visits (name, layer) in a fixed order.
  template <typename F>
  void for_each_layer(F&& f);
  template <typename F>
  void for_each_layer(F&& f) const;
};

// Everything the backward pass needs from a forward pass over one batch.
struct ForwardPass {
  std::vector<Matrix> encoder_pre;  // pre-activations per hidden layer
  std::vector<Matrix> encoder_act;
  Matrix mu;
  Matrix logvar;
  Matrix noise;
  Matrix z;
  std::vector<Matrix> decoder_pre;
  std::vector<Matrix> decoder_act;
  Matrix output;  // activated reconstruction in layout order
};

struct Reconstruction {
  std::vector<double> values;
  Layout layout;

  std::span<const double> group(std::size_t g) const;
  std::span<const double> booleans() const;
  std::span<const double> continuous() const;
};

class BetaVae {
 public:
  BetaVae(const Layout& layout, const ModelConfig& config);

  void initialize(std::uint64_t init_seed);

  const Layout& layout() const { return layout_; }
  const ModelConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim; }

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  nn::GaussianParams encode(std::span<const double> x) const;
  // Batched: returns (mu, logvar), one row per input row.
  std::pair<Matrix, Matrix> encode(const Matrix& x) const;

  Reconstruction decode(std::span<const double> z) const;
  Matrix decode(const Matrix& z) const;

  ForwardPass forward(const Matrix& x, const Matrix& noise) const;

  // Batch-mean loss components; total = rec + beta * kl.
  nn::LossBreakdown loss(const ForwardPass& pass, const Matrix& x, double beta) const;
  // Per-sample reconstruction loss of an activated reconstruction.
  Vector reconstruction_loss_rows(const Matrix& x, const Matrix& reconstruction) const;

  // Exact gradient of loss(pass, x, beta).total with respect to every parameter.
  Parameters backward(const ForwardPass& pass, const Matrix& x, double beta) const;

  std::vector<nn::ParamSlot> slots(const Parameters& grads);
  std::size_t parameter_count() const;
  bool all_finite() const;

  // SHA-256 over parameters in slot order.
  std::string digest() const;

 private:
  void activate_output(Matrix& logits) const;
  double weight_cat() const;
  double weight_bool() const;
  double weight_cont() const;

  Layout layout_;
  ModelConfig config_;
  Parameters params_;
};

struct TrainReport {
  std::vector<nn::LossBreakdown> epoch_loss;
  double wall_seconds = 0.0;
  std::string digest;
};

nlohmann::json to_json(const TrainReport& report);

struct TrainResult {
  BetaVae model;
  TrainReport report;
};

using EpochCallback = std::function<void(std::size_t epoch, const nn::LossBreakdown&)>;

// Minibatch Adam over a seeded shuffle of x_train.
TrainResult train(const Matrix& x_train, const Layout& layout, const ModelConfig& config,
                  const EpochCallback& on_epoch = {});

// Checkpoint: magic "NSLVAECK", u32 version, u64 header length, JSON header
// (config, layout, seed, preprocessor manifest), parameter blocks as u64 rows,
// u64 cols, little-endian float64 data, then the hex SHA-256 of all
// preceding bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  BetaVae model;
  nlohmann::json manifest;
  ModelConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const BetaVae& model,
                     const nlohmann::json& manifest);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename F>
void Parameters::for_each_layer(F&& f) {
  for (std::size_t i = 0; i < encoder.size(); ++i) f("enc" + std::to_string(i), encoder[i]);
  f(std::string("mu"), mu_head);
  f(std::string("logvar"), logvar_head);
  for (std::size_t i = 0; i < decoder.size(); ++i) f("dec" + std::to_string(i), decoder[i]);
  f(std::string("out"), output);
}

template <typename F>
void Parameters::for_each_layer(F&& f) const {
  for (std::size_t i = 0; i < encoder.size(); ++i) f("enc" + std::to_string(i), encoder[i]);
  f(std::string("mu"), mu_head);
  f(std::string("logvar"), logvar_head);
  for (std::size_t i = 0; i < decoder.size(); ++i) f("dec" + std::to_string(i), decoder[i]);
  f(std::string("out"), output);
}

}  // namespace nslvae::model
