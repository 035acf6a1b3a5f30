#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace nslvae {

// Incremental SHA-256 over arbitrary byte ranges.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  void update(std::span<const double> values);  // little-endian IEEE-754
  std::string hex();  // finalizes

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view text);

}  // namespace nslvae
