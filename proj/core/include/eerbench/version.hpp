#pragma once

namespace eerbench {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace eerbench
