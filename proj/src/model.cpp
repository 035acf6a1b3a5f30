#include "nslvae/model.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "nslvae/digest.hpp"
#include "nslvae/error.hpp"
#include "nslvae/rng.hpp"

namespace nslvae::model {

using nn::Activation;
using nn::DenseLayer;

void ModelConfig::validate() const {
  if (input_width == 0) throw UsageError("model: input width must be positive");
  if (latent_dim == 0) throw UsageError("model: latent dim must be positive");
  for (const auto h : encoder_hidden)
    if (h == 0) throw UsageError("model: encoder hidden sizes must be positive");
  for (const auto h : decoder_hidden)
    if (h == 0) throw UsageError("model: decoder hidden sizes must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw UsageError("model: beta must be finite and >= 0");
  if (!(lr > 0.0)) throw UsageError("model: learning rate must be positive");
  if (batch_size == 0) throw UsageError("model: batch size must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_width", c.input_width},
                     {"encoder_hidden", c.encoder_hidden},
                     {"latent_dim", c.latent_dim},
                     {"decoder_hidden", c.decoder_hidden},
                     {"hidden_activation", "relu"},
                     {"beta", c.beta},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"seed", c.seed},
                     {"feature_reduction", c.reduction == FeatureReduction::sum ? "sum" : "mean"}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.input_width = j.value("input_width", c.input_width);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.beta = j.value("beta", c.beta);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  const auto reduction = j.value("feature_reduction", std::string("sum"));
  if (reduction == "sum") {
    c.reduction = FeatureReduction::sum;
  } else if (reduction == "mean") {
    c.reduction = FeatureReduction::mean;
  } else {
    throw UsageError(fmt::format("unknown feature_reduction '{}'", reduction));
  }
  if (j.contains("hidden_activation") && j.at("hidden_activation") != "relu")
    throw UsageError("only relu hidden activations are supported");
}

std::span<const double> Reconstruction::group(std::size_t g) const {
  return std::span<const double>(values).subspan(layout.categorical_offset(g), layout.categorical_sizes.at(g));
}

std::span<const double> Reconstruction::booleans() const {
  return std::span<const double>(values).subspan(layout.boolean_offset(), layout.boolean_count);
}

std::span<const double> Reconstruction::continuous() const {
  return std::span<const double>(values).subspan(layout.continuous_offset(), layout.continuous_count);
}

BetaVae::BetaVae(const Layout& layout, const ModelConfig& config) : layout_(layout), config_(config) {
  if (config_.input_width == 0) config_.input_width = layout_.width();
  if (config_.input_width != layout_.width())
    throw ShapeError(fmt::format("model input width {} != layout width {}", config_.input_width,
                                 layout_.width()));
  config_.validate();
  std::size_t in = config_.input_width;
  for (const auto h : config_.encoder_hidden) {
    params_.encoder.emplace_back(in, h);
    in = h;
  }
  params_.mu_head = DenseLayer(in, config_.latent_dim);
  params_.logvar_head = DenseLayer(in, config_.latent_dim);
  in = config_.latent_dim;
  for (const auto h : config_.decoder_hidden) {
    params_.decoder.emplace_back(in, h);
    in = h;
  }
  params_.output = DenseLayer(in, config_.input_width);
}

void BetaVae::initialize(std::uint64_t init_seed) {
  Rng rng(init_seed);
  params_.for_each_layer([&](const std::string&, DenseLayer& layer) { layer.init_uniform(rng); });
}

double BetaVae::weight_cat() const {
  const auto groups = layout_.categorical_sizes.size();
  return config_.reduction == FeatureReduction::mean && groups > 0 ? 1.0 / static_cast<double>(groups) : 1.0;
}

double BetaVae::weight_bool() const {
  const auto n = layout_.boolean_count;
  return config_.reduction == FeatureReduction::mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
}

double BetaVae::weight_cont() const {
  const auto n = layout_.continuous_count;
  return config_.reduction == FeatureReduction::mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
}

void BetaVae::activate_output(Matrix& logits) const {
  std::size_t offset = 0;
  for (const auto g : layout_.categorical_sizes) {
    nn::softmax_rows_inplace(logits.middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(g)));
    offset += g;
  }
  auto bools = logits.middleCols(static_cast<Eigen::Index>(layout_.boolean_offset()),
                                 static_cast<Eigen::Index>(layout_.boolean_count));
  bools = bools.unaryExpr([](double a) {
    return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
  });
}

std::pair<Matrix, Matrix> BetaVae::encode(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != config_.input_width)
    throw ShapeError(fmt::format("encode: input width {} != model width {}", x.cols(), config_.input_width));
  Matrix h = x;
  for (const auto& layer : params_.encoder) {
    h = nn::affine(layer, h);
    nn::activate_inplace(h, Activation::relu);
  }
  return {nn::affine(params_.mu_head, h), nn::affine(params_.logvar_head, h)};
}

nn::GaussianParams BetaVae::encode(std::span<const double> x) const {
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  auto [mu, logvar] = encode(row);
  return {mu.row(0).transpose(), logvar.row(0).transpose()};
}

Matrix BetaVae::decode(const Matrix& z) const {
  if (static_cast<std::size_t>(z.cols()) != config_.latent_dim)
    throw ShapeError(fmt::format("decode: latent width {} != {}", z.cols(), config_.latent_dim));
  Matrix h = z;
  for (const auto& layer : params_.decoder) {
    h = nn::affine(layer, h);
    nn::activate_inplace(h, Activation::relu);
  }
  Matrix out = nn::affine(params_.output, h);
  activate_output(out);
  return out;
}

Reconstruction BetaVae::decode(std::span<const double> z) const {
  const Matrix row = Eigen::Map<const Matrix>(z.data(), 1, static_cast<Eigen::Index>(z.size()));
  const Matrix out = decode(row);
  return {std::vector<double>(out.data(), out.data() + out.size()), layout_};
}

ForwardPass BetaVae::forward(const Matrix& x, const Matrix& noise) const {
  if (static_cast<std::size_t>(x.cols()) != config_.input_width)
    throw ShapeError(fmt::format("forward: input width {} != model width {}", x.cols(), config_.input_width));
  if (noise.rows() != x.rows() || static_cast<std::size_t>(noise.cols()) != config_.latent_dim)
    throw ShapeError("forward: noise must be batch x latent");
  ForwardPass f;
  const Matrix* h = &x;
  for (const auto& layer : params_.encoder) {
    f.encoder_pre.push_back(nn::affine(layer, *h));
    f.encoder_act.push_back(f.encoder_pre.back().cwiseMax(0.0));
    h = &f.encoder_act.back();
  }
  f.mu = nn::affine(params_.mu_head, *h);
  f.logvar = nn::affine(params_.logvar_head, *h);
  f.noise = noise;
  f.z = nn::reparameterize(f.mu, f.logvar, noise);
  h = &f.z;
  for (const auto& layer : params_.decoder) {
    f.decoder_pre.push_back(nn::affine(layer, *h));
    f.decoder_act.push_back(f.decoder_pre.back().cwiseMax(0.0));
    h = &f.decoder_act.back();
  }
  f.output = nn::affine(params_.output, *h);
  activate_output(f.output);
  return f;
}

nn::LossBreakdown BetaVae::loss(const ForwardPass& pass, const Matrix& x, double beta) const {
  const auto& L = layout_;
  const auto ci = static_cast<Eigen::Index>(L.categorical_width());
  const auto bo = static_cast<Eigen::Index>(L.boolean_offset());
  const auto bn = static_cast<Eigen::Index>(L.boolean_count);
  const auto co = static_cast<Eigen::Index>(L.continuous_offset());
  const auto cn = static_cast<Eigen::Index>(L.continuous_count);
  const double cat = weight_cat() * nn::categorical_loss(x.leftCols(ci), pass.output.leftCols(ci), L.categorical_sizes);
  const double boolean = weight_bool() * nn::boolean_loss(x.middleCols(bo, bn), pass.output.middleCols(bo, bn));
  const double cont = weight_cont() * nn::continuous_loss(x.middleCols(co, cn), pass.output.middleCols(co, cn));
  const double kl = x.rows() == 0 ? 0.0 : nn::kl_divergence(pass.mu, pass.logvar).mean();
  return nn::LossBreakdown::assemble(cat, boolean, cont, kl, beta);
}

Vector BetaVae::reconstruction_loss_rows(const Matrix& x, const Matrix& recon) const {
  if (x.rows() != recon.rows() || x.cols() != recon.cols() ||
      static_cast<std::size_t>(x.cols()) != layout_.width())
    throw ShapeError("reconstruction_loss_rows: shape mismatch");
  const auto& L = layout_;
  const auto ci = static_cast<Eigen::Index>(L.categorical_width());
  const auto bo = static_cast<Eigen::Index>(L.boolean_offset());
  const auto bn = static_cast<Eigen::Index>(L.boolean_count);
  const auto co = static_cast<Eigen::Index>(L.continuous_offset());
  const auto cn = static_cast<Eigen::Index>(L.continuous_count);
  Vector out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double cat = weight_cat() * nn::categorical_loss(x.row(r).head(ci), recon.row(r).head(ci), L.categorical_sizes);
    const double boolean = weight_bool() * nn::boolean_loss(x.row(r).segment(bo, bn), recon.row(r).segment(bo, bn));
    const double cont = weight_cont() * nn::continuous_loss(x.row(r).segment(co, cn), recon.row(r).segment(co, cn));
    out[r] = cat + boolean + cont;
  }
  return out;
}

namespace {

// Accumulates the gradient of an affine layer; returns d(loss)/d(input).
Matrix affine_backward(const DenseLayer& layer, const Matrix& input, const Matrix& d_out,
                       DenseLayer& grad, bool need_input_grad = true) {
  grad.weights.noalias() = d_out.transpose() * input;
  grad.bias = d_out.colwise().sum().transpose();
  if (!need_input_grad) return {};
  return d_out * layer.weights;
}

void relu_backward(Matrix& d, const Matrix& pre) {
  d = (pre.array() > 0.0).select(d, 0.0);
}

}  // namespace

Parameters BetaVae::backward(const ForwardPass& f, const Matrix& x, double beta) const {
  const auto& L = layout_;
  const Eigen::Index n = x.rows();
  Parameters g = params_;  // same shapes; every entry is overwritten
  if (n == 0) {
    g.for_each_layer([](const std::string&, DenseLayer& layer) { layer.set_zero(); });
    return g;
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix d_logits(n, x.cols());
  // Softmax + clamped cross-entropy: with t_j = -x_j [p_j > eps],
  // dL/da_k = t_k - p_k * sum_j t_j.
  const double wc = weight_cat() * inv_n;
  std::size_t offset = 0;
  for (const auto gsize : L.categorical_sizes) {
    for (Eigen::Index r = 0; r < n; ++r) {
      double t_sum = 0.0;
      for (std::size_t j = 0; j < gsize; ++j) {
        const auto c = static_cast<Eigen::Index>(offset + j);
        const double t = f.output(r, c) > nn::kLogClamp ? -x(r, c) : 0.0;
        d_logits(r, c) = t;
        t_sum += t;
      }
      for (std::size_t j = 0; j < gsize; ++j) {
        const auto c = static_cast<Eigen::Index>(offset + j);
        d_logits(r, c) = wc * (d_logits(r, c) - f.output(r, c) * t_sum);
      }
    }
    offset += gsize;
  }
  // Sigmoid + clamped binary cross-entropy: p - x inside the clamp, else 0.
  const double wb = weight_bool() * inv_n;
  for (std::size_t b = 0; b < L.boolean_count; ++b) {
    const auto c = static_cast<Eigen::Index>(L.boolean_offset() + b);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double p = f.output(r, c);
      d_logits(r, c) = (p > nn::kLogClamp && p < 1.0 - nn::kLogClamp) ? wb * (p - x(r, c)) : 0.0;
    }
  }
  const double wn = weight_cont() * inv_n;
  for (std::size_t k = 0; k < L.continuous_count; ++k) {
    const auto c = static_cast<Eigen::Index>(L.continuous_offset() + k);
    for (Eigen::Index r = 0; r < n; ++r) d_logits(r, c) = wn * 2.0 * (f.output(r, c) - x(r, c));
  }

  // Decoder.
  const std::size_t n_dec = params_.decoder.size();
  const Matrix& dec_top = n_dec > 0 ? f.decoder_act.back() : f.z;
  Matrix d_h = affine_backward(params_.output, dec_top, d_logits, g.output);
  for (std::size_t i = n_dec; i-- > 0;) {
    relu_backward(d_h, f.decoder_pre[i]);
    const Matrix& input = i > 0 ? f.decoder_act[i - 1] : f.z;
    d_h = affine_backward(params_.decoder[i], input, d_h, g.decoder[i]);
  }

  // Reparameterization: z = mu + exp(logvar/2) * noise.
  const Matrix& d_z = d_h;
  Matrix d_mu = d_z;
  Matrix d_logvar = (d_z.array() * f.noise.array() * 0.5 * (0.5 * f.logvar.array()).exp()).matrix();
  if (beta != 0.0) {
    d_mu += (beta * inv_n) * f.mu;
    d_logvar += ((beta * inv_n * 0.5) * (f.logvar.array().exp() - 1.0)).matrix();
  }

  // Encoder.
  const std::size_t n_enc = params_.encoder.size();
  const Matrix& enc_top = n_enc > 0 ? f.encoder_act.back() : x;
  Matrix d_enc = affine_backward(params_.mu_head, enc_top, d_mu, g.mu_head, n_enc > 0);
  if (n_enc > 0) d_enc += affine_backward(params_.logvar_head, enc_top, d_logvar, g.logvar_head);
  else affine_backward(params_.logvar_head, enc_top, d_logvar, g.logvar_head, false);
  for (std::size_t i = n_enc; i-- > 0;) {
    relu_backward(d_enc, f.encoder_pre[i]);
    const Matrix& input = i > 0 ? f.encoder_act[i - 1] : x;
    d_enc = affine_backward(params_.encoder[i], input, d_enc, g.encoder[i], i > 0);
  }
  return g;
}

std::vector<nn::ParamSlot> BetaVae::slots(const Parameters& grads) {
  std::vector<DenseLayer*> values;
  std::vector<std::string> names;
  params_.for_each_layer([&](const std::string& name, DenseLayer& layer) {
    values.push_back(&layer);
    names.push_back(name);
  });
  std::vector<const DenseLayer*> gs;
  grads.for_each_layer([&](const std::string&, const DenseLayer& layer) { gs.push_back(&layer); });
  if (gs.size() != values.size()) throw ShapeError("gradient structure does not match model");
  std::vector<nn::ParamSlot> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& v = *values[i];
    const auto& gr = *gs[i];
    if (gr.weights.rows() != v.weights.rows() || gr.weights.cols() != v.weights.cols() ||
        gr.bias.size() != v.bias.size())
      throw ShapeError(fmt::format("gradient shape mismatch in {}", names[i]));
    out.push_back({names[i] + ".W", std::span<double>(v.weights.data(), static_cast<std::size_t>(v.weights.size())),
                   std::span<const double>(gr.weights.data(), static_cast<std::size_t>(gr.weights.size()))});
    out.push_back({names[i] + ".b", std::span<double>(v.bias.data(), static_cast<std::size_t>(v.bias.size())),
                   std::span<const double>(gr.bias.data(), static_cast<std::size_t>(gr.bias.size()))});
  }
  return out;
}

std::size_t BetaVae::parameter_count() const {
  std::size_t n = 0;
  params_.for_each_layer([&](const std::string&, const DenseLayer& l) {
    n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  });
  return n;
}

bool BetaVae::all_finite() const {
  bool ok = true;
  params_.for_each_layer([&](const std::string&, const DenseLayer& l) { ok = ok && l.all_finite(); });
  return ok;
}

std::string BetaVae::digest() const {
  Sha256 h;
  params_.for_each_layer([&](const std::string& name, const DenseLayer& l) {
    h.update(fmt::format("{}:{}x{};", name, l.weights.rows(), l.weights.cols()));
    h.update(std::span<const double>(l.weights.data(), static_cast<std::size_t>(l.weights.size())));
    h.update(std::span<const double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
  });
  return h.hex();
}

nlohmann::json to_json(const TrainReport& report) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& b : report.epoch_loss)
    epochs.push_back({{"l_cat", b.l_cat}, {"l_bool", b.l_bool}, {"l_cont", b.l_cont},
                      {"l_rec", b.l_rec}, {"l_kl", b.l_kl}, {"total", b.total}});
  return {{"epochs", epochs}, {"wall_seconds", report.wall_seconds}, {"digest", report.digest}};
}

TrainResult train(const Matrix& x_train, const Layout& layout, const ModelConfig& config,
                  const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  if (x_train.rows() == 0) throw TrainError("train: X_train is empty");
  BetaVae model(layout, config);
  const auto& cfg = model.config();
  const RunSeeds seeds = derive_run_seeds(cfg.seed);
  model.initialize(seeds.init);
  Rng shuffle_rng(seeds.shuffle);
  Rng noise_rng(seeds.noise);

  nn::AdamState adam;
  adam.hp.lr = cfg.lr;

  const auto n = static_cast<std::size_t>(x_train.rows());
  const auto width = x_train.cols();
  const auto latent = static_cast<Eigen::Index>(cfg.latent_dim);
  std::vector<std::size_t> order(n);
  TrainReport report;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    nn::LossBreakdown sum;
    for (std::size_t start_row = 0; start_row < n; start_row += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, n - start_row);
      Matrix batch(static_cast<Eigen::Index>(rows), width);
      for (std::size_t r = 0; r < rows; ++r)
        batch.row(static_cast<Eigen::Index>(r)) = x_train.row(static_cast<Eigen::Index>(order[start_row + r]));
      Matrix noise(static_cast<Eigen::Index>(rows), latent);
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = noise_rng.normal();

      const ForwardPass pass = model.forward(batch, noise);
      const nn::LossBreakdown loss = model.loss(pass, batch, cfg.beta);
      if (!std::isfinite(loss.total))
        throw TrainError(fmt::format("non-finite loss at epoch {} step {} (rec={}, kl={})", epoch, step,
                                     loss.l_rec, loss.l_kl));
      const Parameters grads = model.backward(pass, batch, cfg.beta);
      const auto slots = model.slots(grads);
      try {
        nn::adam_step(slots, adam);
      } catch (const TrainError& e) {
        throw TrainError(fmt::format("epoch {} step {}: {}", epoch, step, e.what()));
      }
      const double w = static_cast<double>(rows);
      sum.l_cat += w * loss.l_cat;
      sum.l_bool += w * loss.l_bool;
      sum.l_cont += w * loss.l_cont;
      sum.l_kl += w * loss.l_kl;
      ++step;
    }
    const double inv = 1.0 / static_cast<double>(n);
    const auto mean = nn::LossBreakdown::assemble(sum.l_cat * inv, sum.l_bool * inv, sum.l_cont * inv,
                                                  sum.l_kl * inv, cfg.beta);
    report.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  if (!model.all_finite()) throw TrainError("training produced non-finite parameters");
  report.digest = model.digest();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

}  // namespace nslvae::model
