#pragma once

namespace specmatch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace specmatch
