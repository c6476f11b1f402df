#pragma once

#include <cstdint>

#include <json.hpp>

namespace prioflow {

/// Accepts both unsigned and non-negative signed JSON integers; documents
/// built in code use the signed form.
inline bool is_non_negative_integer(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

}  // namespace prioflow
