#pragma once

namespace fidex {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fidex
