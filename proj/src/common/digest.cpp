#include "rar/digest.hpp"

#include <openssl/evp.h>

#include <array>

#include "rar/error.hpp"

namespace rar {

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
  bool finished = false;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInvalidArgument, "sha256 initialisation failed");
  }
}

Sha256::~Sha256() {
  if (impl_ && impl_->ctx != nullptr) EVP_MD_CTX_free(impl_->ctx);
}

Sha256& Sha256::update(std::string_view bytes) {
  if (impl_->finished) throw Error(ErrorCode::kInvalidArgument, "sha256 already finalised");
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update_framed(std::string_view field) {
  std::array<unsigned char, 8> length{};
  std::uint64_t n = field.size();
  for (std::size_t i = 0; i < length.size(); ++i) {
    length[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xffU);
  }
  update(std::string_view(reinterpret_cast<const char*>(length.data()), length.size()));
  return update(field);
}

std::string Sha256::hex_digest() {
  if (impl_->finished) throw Error(ErrorCode::kInvalidArgument, "sha256 already finalised");
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, md.data(), &len);
  impl_->finished = true;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0x0f]);
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex_digest();
}

}  // namespace rar
