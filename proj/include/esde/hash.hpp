#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace esde {

/// 64-bit FNV-1a, used for manifest/content fingerprints (not cryptographic).
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::span<const double> values) {
    update(std::string_view(reinterpret_cast<const char*>(values.data()),
                            values.size_bytes()));
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_hex(std::string_view bytes);
std::string hash_file(const std::string& path);

}  // namespace esde
