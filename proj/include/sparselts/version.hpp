#pragma once

namespace sparselts {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sparselts
