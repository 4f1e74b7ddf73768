#pragma once

namespace cxr {

inline constexpr const char* kVersion = "0.1.0";

} // namespace cxr
