#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace nslvae {

// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Column layout of an encoded feature vector: one one-hot group per
// categorical feature, then the boolean block, then the continuous block.
struct Layout {
  std::vector<std::size_t> categorical_sizes;
  std::size_t boolean_count = 0;
  std::size_t continuous_count = 0;

  std::size_t categorical_width() const {
    return std::accumulate(categorical_sizes.begin(), categorical_sizes.end(), std::size_t{0});
  }
  std::size_t categorical_offset(std::size_t group) const {
    return std::accumulate(categorical_sizes.begin(),
                           categorical_sizes.begin() + static_cast<std::ptrdiff_t>(group),
                           std::size_t{0});
  }
  std::size_t boolean_offset() const { return categorical_width(); }
  std::size_t continuous_offset() const { return categorical_width() + boolean_count; }
  std::size_t width() const { return continuous_offset() + continuous_count; }

  bool operator==(const Layout&) const = default;
};

void to_json(nlohmann::json& j, const Layout& layout);
void from_json(const nlohmann::json& j, Layout& layout);

}  // namespace nslvae
