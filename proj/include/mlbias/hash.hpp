#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mlbias {

// Hex SHA-256 digests.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Incremental hasher for values that are not contiguous in memory.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view data);
  std::string hex_digest();

 private:
  void* ctx_;
};

}  // namespace mlbias
