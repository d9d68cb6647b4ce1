#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mpcal {

// Lowercase hex SHA-256 of `data`.
std::string Sha256Hex(std::string_view data);

// Lowercase hex SHA-256 of a file's bytes. Throws DataError if unreadable.
std::string Sha256File(const std::filesystem::path& path);

// Incremental hasher with unambiguous field framing (each field is
// length-prefixed), so ("ab","c") and ("a","bc") never collide.
class FieldHasher {
 public:
  FieldHasher();
  ~FieldHasher();
  FieldHasher(const FieldHasher&) = delete;
  FieldHasher& operator=(const FieldHasher&) = delete;

  FieldHasher& Add(std::string_view field);
  FieldHasher& Add(std::uint64_t value);
  FieldHasher& Add(double value);
  std::string HexDigest();

 private:
  void* ctx_;
};

// SplitMix64 finalizer. Stateless 64-bit mixing.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over bytes; stable across platforms.
constexpr std::uint64_t Fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Maps 64 random bits onto [0, 1) with 53-bit resolution.
constexpr double UnitInterval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace mpcal
