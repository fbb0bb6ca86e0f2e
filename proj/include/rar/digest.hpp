#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace rar {

// Incremental SHA-256. Framed updates prefix each field with its byte length
// so that ("ab", "c") and ("a", "bc") never collide.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update_framed(std::string_view field);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

}  // namespace rar
