#pragma once

namespace moi2d {

inline constexpr const char* version = "0.1.0";

} // namespace moi2d
