#pragma once

#include <cstdint>
#include <vector>

#include "agentdel/error.hpp"
#include "json.hpp"

namespace agentdel {

// Canonical serialization: sorted object keys (byte-lexicographic), no
// insignificant whitespace, integers in shortest decimal form, UTF-8 strings.
// Floating-point values are rejected so the form stays deterministic across
// platforms. Signatures and hash references are defined over these bytes.
Result<std::vector<std::uint8_t>> canonical_bytes(const nlohmann::json& value);

}  // namespace agentdel
