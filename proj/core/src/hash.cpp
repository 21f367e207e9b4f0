#include "manifold_kin/hash.hpp"

#include <openssl/evp.h>

#include "manifold_kin/errors.hpp"

namespace mkin {

Sha256 sha256(const void* data, std::size_t size) {
  Sha256 out{};
  unsigned int out_len = 0;
  if (EVP_Digest(data, size, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != out.size()) {
    throw Error("sha256: digest computation failed");
  }
  return out;
}

Sha256 sha256(const std::string& data) { return sha256(data.data(), data.size()); }

std::string to_hex(const Sha256& digest) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (std::uint8_t b : digest) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0xf]);
  }
  return s;
}

}  // namespace mkin
