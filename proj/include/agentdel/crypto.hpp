#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace agentdel::crypto {

constexpr std::size_t kPublicKeyBytes = 32;
constexpr std::size_t kSecretKeyBytes = 64;  // libsodium ed25519 expanded form
constexpr std::size_t kSignatureBytes = 64;
constexpr std::size_t kHashBytes = 32;

using PublicKey = std::array<std::uint8_t, kPublicKeyBytes>;
using SecretKey = std::array<std::uint8_t, kSecretKeyBytes>;
using Signature = std::array<std::uint8_t, kSignatureBytes>;
using Digest = std::array<std::uint8_t, kHashBytes>;

struct KeyPair {
  PublicKey public_key;
  SecretKey secret_key;
};

KeyPair generate_keypair();
// Deterministic keypair from a 32-byte seed; used by tests and scenario fixtures.
KeyPair keypair_from_seed(const std::array<std::uint8_t, 32>& seed);

PublicKey public_of(const SecretKey& key);

Signature sign(const std::vector<std::uint8_t>& message, const SecretKey& key);
bool verify(const std::vector<std::uint8_t>& message, const Signature& sig,
            const PublicKey& key);

Digest sha256(const std::vector<std::uint8_t>& data);

std::string to_hex(const std::uint8_t* data, std::size_t len);
inline std::string to_hex(const std::vector<std::uint8_t>& v) {
  return to_hex(v.data(), v.size());
}
template <std::size_t N>
std::string to_hex(const std::array<std::uint8_t, N>& a) {
  return to_hex(a.data(), N);
}
std::optional<std::vector<std::uint8_t>> from_hex(const std::string& hex);
template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> array_from_hex(const std::string& hex) {
  auto v = from_hex(hex);
  if (!v || v->size() != N) return std::nullopt;
  std::array<std::uint8_t, N> a{};
  std::copy(v->begin(), v->end(), a.begin());
  return a;
}

// base64url without padding, as used in the token wire format.
std::string base64url_encode(const std::vector<std::uint8_t>& data);
std::optional<std::vector<std::uint8_t>> base64url_decode(const std::string& text);

std::vector<std::uint8_t> random_bytes(std::size_t n);

}  // namespace agentdel::crypto
