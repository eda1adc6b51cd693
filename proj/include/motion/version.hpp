#pragma once

namespace motion {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace motion
