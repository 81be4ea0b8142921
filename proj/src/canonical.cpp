#include "agentdel/canonical.hpp"

namespace agentdel {

namespace {
bool only_canonical_types(const nlohmann::json& v) {
  switch (v.type()) {
    case nlohmann::json::value_t::null:
    case nlohmann::json::value_t::boolean:
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
    case nlohmann::json::value_t::string:
      return true;
    case nlohmann::json::value_t::array:
      for (const auto& e : v)
        if (!only_canonical_types(e)) return false;
      return true;
    case nlohmann::json::value_t::object:
      for (const auto& [k, e] : v.items())
        if (!only_canonical_types(e)) return false;
      return true;
    default:
      return false;  // float, binary, discarded
  }
}
}  // namespace

Result<std::vector<std::uint8_t>> canonical_bytes(const nlohmann::json& value) {
  if (!only_canonical_types(value))
    return Error(Errc::EncodingError, "non-canonical value type (float/binary)");
  std::string text;
  try {
    // nlohmann::json objects are key-ordered std::maps; dump() with no indent
    // already emits the sorted, whitespace-free form.
    text = value.dump();
  } catch (const nlohmann::json::type_error& e) {
    return Error(Errc::EncodingError, e.what());
  }
  return std::vector<std::uint8_t>(text.begin(), text.end());
}

}  // namespace agentdel
