#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nslvae/layout.hpp"

namespace nslvae {
class Rng;
}

namespace nslvae::nn {

enum class Activation { linear, relu, sigmoid, softmax_groups };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);

  std::size_t in_size() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_size() const { return static_cast<std::size_t>(weights.rows()); }

  // U(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  void init_uniform(Rng& rng);
  void set_zero();
  bool all_finite() const;
};

// Affine map followed by the activation. For softmax_groups, `groups` lists
// the sizes of consecutive softmax groups and must cover the output.
Vector dense_forward(const DenseLayer& layer, std::span<const double> input,
                     Activation activation, std::span<const std::size_t> groups = {});

// Batched affine map: one sample per row.
Matrix affine(const DenseLayer& layer, const Matrix& input);
void activate_inplace(Matrix& values, Activation activation,
                      std::span<const std::size_t> groups = {});
void softmax_rows_inplace(Eigen::Ref<Matrix> logits);

struct GaussianParams {
  Vector mu;
  Vector logvar;  // log sigma^2
};

// z = mu + exp(logvar / 2) * noise
Vector reparameterize(const GaussianParams& g, std::span<const double> noise);
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise);

// 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
double kl_divergence(const GaussianParams& g);
// Per-row KL values.
Vector kl_divergence(const Matrix& mu, const Matrix& logvar);

inline constexpr double kLogClamp = 1e-7;

// Each loss takes only the columns of its own feature type and returns the
// batch mean of the per-sample sum over those features.
double categorical_loss(const Eigen::Ref<const Matrix>& target,
                        const Eigen::Ref<const Matrix>& predicted,
                        std::span<const std::size_t> groups);
double boolean_loss(const Eigen::Ref<const Matrix>& target,
                    const Eigen::Ref<const Matrix>& predicted);
double continuous_loss(const Eigen::Ref<const Matrix>& target,
                       const Eigen::Ref<const Matrix>& predicted);

double categorical_loss(std::span<const double> target, std::span<const double> predicted,
                        std::span<const std::size_t> groups);
double boolean_loss(std::span<const double> target, std::span<const double> predicted);
double continuous_loss(std::span<const double> target, std::span<const double> predicted);

struct LossBreakdown {
  double l_cat = 0.0;
  double l_bool = 0.0;
  double l_cont = 0.0;
  double l_rec = 0.0;
  double l_kl = 0.0;
  double total = 0.0;

  static LossBreakdown assemble(double cat, double boolean, double cont, double kl, double beta);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig hp;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct ParamSlot {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

// One bias-corrected Adam update over every slot. Moments are created on the
// first call. A non-finite gradient throws TrainError naming the slot and
// leaves params and state untouched.
void adam_step(std::span<const ParamSlot> params, AdamState& state);

}  // namespace nslvae::nn
