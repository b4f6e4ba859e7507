#pragma once

namespace pgop {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pgop
