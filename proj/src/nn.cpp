#include "nslvae/nn.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "nslvae/error.hpp"
#include "nslvae/rng.hpp"

namespace nslvae::nn {

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weights(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias(Vector::Zero(static_cast<Eigen::Index>(out))) {}

void DenseLayer::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_size()));
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = rng.uniform(-bound, bound);
}

void DenseLayer::set_zero() {
  weights.setZero();
  bias.setZero();
}

bool DenseLayer::all_finite() const { return weights.allFinite() && bias.allFinite(); }

void softmax_rows_inplace(Eigen::Ref<Matrix> logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    row /= sum;
  }
}

static double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

void activate_inplace(Matrix& values, Activation activation, std::span<const std::size_t> groups) {
  switch (activation) {
    case Activation::linear:
      break;
    case Activation::relu:
      values = values.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      values = values.unaryExpr([](double a) { return sigmoid(a); });
      break;
    case Activation::softmax_groups: {
      std::size_t offset = 0;
      for (const std::size_t g : groups) {
        softmax_rows_inplace(values.middleCols(static_cast<Eigen::Index>(offset),
                                               static_cast<Eigen::Index>(g)));
        offset += g;
      }
      if (offset != static_cast<std::size_t>(values.cols()))
        throw ShapeError(fmt::format("softmax groups cover {} of {} outputs", offset, values.cols()));
      break;
    }
  }
}

Matrix affine(const DenseLayer& layer, const Matrix& input) {
  if (static_cast<std::size_t>(input.cols()) != layer.in_size())
    throw ShapeError(fmt::format("dense layer expects {} inputs, got {}", layer.in_size(), input.cols()));
  Matrix out = input * layer.weights.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

Vector dense_forward(const DenseLayer& layer, std::span<const double> input, Activation activation,
                     std::span<const std::size_t> groups) {
  Matrix row = Eigen::Map<const Matrix>(input.data(), 1, static_cast<Eigen::Index>(input.size()));
  Matrix out = affine(layer, row);
  activate_inplace(out, activation, groups);
  return out.row(0).transpose();
}

Vector reparameterize(const GaussianParams& g, std::span<const double> noise) {
  if (static_cast<Eigen::Index>(noise.size()) != g.mu.size() || g.mu.size() != g.logvar.size())
    throw ShapeError("reparameterize: noise length must equal latent dim");
  const auto eps = Eigen::Map<const Vector>(noise.data(), static_cast<Eigen::Index>(noise.size()));
  return g.mu + ((0.5 * g.logvar.array()).exp() * eps.array()).matrix();
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise) {
  if (mu.rows() != noise.rows() || mu.cols() != noise.cols() || logvar.rows() != mu.rows() ||
      logvar.cols() != mu.cols())
    throw ShapeError("reparameterize: shape mismatch");
  return mu.array() + (0.5 * logvar.array()).exp() * noise.array();
}

double kl_divergence(const GaussianParams& g) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < g.mu.size(); ++d)
    s += g.mu[d] * g.mu[d] + std::exp(g.logvar[d]) - 1.0 - g.logvar[d];
  return 0.5 * s;
}

Vector kl_divergence(const Matrix& mu, const Matrix& logvar) {
  Vector out(mu.rows());
  for (Eigen::Index r = 0; r < mu.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < mu.cols(); ++d)
      s += mu(r, d) * mu(r, d) + std::exp(logvar(r, d)) - 1.0 - logvar(r, d);
    out[r] = 0.5 * s;
  }
  return out;
}

namespace {

void require_same_shape(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(fmt::format("{}: target {}x{} vs prediction {}x{}", what, a.rows(), a.cols(),
                                 b.rows(), b.cols()));
}

Eigen::Map<const Matrix> as_row(std::span<const double> v) {
  return Eigen::Map<const Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double categorical_loss(const Eigen::Ref<const Matrix>& target, const Eigen::Ref<const Matrix>& predicted,
                        std::span<const std::size_t> groups) {
  require_same_shape(target, predicted, "categorical_loss");
  std::size_t covered = 0;
  for (const auto g : groups) covered += g;
  if (covered != static_cast<std::size_t>(target.cols()))
    throw ShapeError("categorical_loss: groups do not cover the block");
  if (target.rows() == 0) return 0.0;
  // Groups only partition the columns; the cross-entropy sum is over all of them.
  double total = 0.0;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      const double x = target(r, c);
      if (x != 0.0) s -= x * std::log(std::clamp(predicted(r, c), kLogClamp, 1.0));
    }
    total += s;
  }
  return total / static_cast<double>(target.rows());
}

double boolean_loss(const Eigen::Ref<const Matrix>& target, const Eigen::Ref<const Matrix>& predicted) {
  require_same_shape(target, predicted, "boolean_loss");
  if (target.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      const double x = target(r, c);
      const double p = std::clamp(predicted(r, c), kLogClamp, 1.0 - kLogClamp);
      s -= x * std::log(p) + (1.0 - x) * std::log(1.0 - p);
    }
    total += s;
  }
  return total / static_cast<double>(target.rows());
}

double continuous_loss(const Eigen::Ref<const Matrix>& target, const Eigen::Ref<const Matrix>& predicted) {
  require_same_shape(target, predicted, "continuous_loss");
  if (target.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      const double d = target(r, c) - predicted(r, c);
      s += d * d;
    }
    total += s;
  }
  return total / static_cast<double>(target.rows());
}

double categorical_loss(std::span<const double> target, std::span<const double> predicted,
                        std::span<const std::size_t> groups) {
  return categorical_loss(as_row(target), as_row(predicted), groups);
}

double boolean_loss(std::span<const double> target, std::span<const double> predicted) {
  return boolean_loss(as_row(target), as_row(predicted));
}

double continuous_loss(std::span<const double> target, std::span<const double> predicted) {
  return continuous_loss(as_row(target), as_row(predicted));
}

LossBreakdown LossBreakdown::assemble(double cat, double boolean, double cont, double kl, double beta) {
  LossBreakdown b;
  b.l_cat = cat;
  b.l_bool = boolean;
  b.l_cont = cont;
  b.l_rec = cat + boolean + cont;
  b.l_kl = kl;
  b.total = b.l_rec + beta * kl;
  return b;
}

void adam_step(std::span<const ParamSlot> params, AdamState& state) {
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size())
      throw ShapeError(fmt::format("adam: gradient shape mismatch for {}", p.name));
    for (const double g : p.grad)
      if (!std::isfinite(g)) throw TrainError(fmt::format("adam: non-finite gradient in {}", p.name));
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam: parameter block count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].size() != params[i].value.size())
      throw ShapeError(fmt::format("adam: accumulator shape mismatch for {}", params[i].name));

  const auto& hp = state.hp;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& p = params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p.value[j] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
  }
}

}  // namespace nslvae::nn
