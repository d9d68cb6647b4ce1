#include "mpcal/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mpcal/errors.hpp"

namespace mpcal {
namespace {

std::string ToHex(const unsigned char* bytes, unsigned int len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = kDigits[bytes[i] >> 4];
    out[2 * i + 1] = kDigits[bytes[i] & 0xf];
  }
  return out;
}

EVP_MD_CTX* NewSha256() {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest init failed");
  }
  return ctx;
}

std::string Finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  return ToHex(md.data(), len);
}

}  // namespace

std::string Sha256Hex(std::string_view data) {
  EVP_MD_CTX* ctx = NewSha256();
  EVP_DigestUpdate(ctx, data.data(), data.size());
  std::string hex = Finish(ctx);
  EVP_MD_CTX_free(ctx);
  return hex;
}

std::string Sha256File(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  EVP_MD_CTX* ctx = NewSha256();
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(in.gcount()));
  }
  std::string hex = Finish(ctx);
  EVP_MD_CTX_free(ctx);
  return hex;
}

FieldHasher::FieldHasher() : ctx_(NewSha256()) {}

FieldHasher::~FieldHasher() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

FieldHasher& FieldHasher::Add(std::string_view field) {
  Add(static_cast<std::uint64_t>(field.size()));
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), field.data(), field.size());
  return *this;
}

FieldHasher& FieldHasher::Add(std::uint64_t value) {
  std::array<unsigned char, 8> le{};
  for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(value >> (8 * i));
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), le.data(), le.size());
  return *this;
}

FieldHasher& FieldHasher::Add(double value) {
  return Add(std::bit_cast<std::uint64_t>(value));
}

std::string FieldHasher::HexDigest() {
  return Finish(static_cast<EVP_MD_CTX*>(ctx_));
}

}  // namespace mpcal
