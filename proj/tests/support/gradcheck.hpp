#pragma once

#include <cstdint>
#include <string>

#include "nslvae/model.hpp"

namespace nslvae::testing {

// Random batch that respects the layout: one-hot groups, 0/1 booleans,
// standard-normal continuous columns.
Matrix random_batch(const Layout& layout, std::size_t rows, std::uint64_t seed);
Matrix random_noise(std::size_t rows, std::size_t latent, std::uint64_t seed);

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "<slot>[i]"
  std::size_t checked = 0;
  // Perturbations whose +h and -h passes differ in some hidden ReLU on/off
  // pattern. These are re-checked at the largest h / 2^j without a flip and
  // kept out of max_rel_error.
  std::size_t kinks = 0;
  double kink_max_rel_error = 0.0;
  std::string kink_worst;
};

// Central differences of loss().total against backward() for every
// parameter. rel = |a - n| / max(|a|, |n|, floor).
GradCheck gradient_check(model::BetaVae& model, const Matrix& x, const Matrix& noise, double beta,
                         double h, double floor);

}  // namespace nslvae::testing
