#pragma once

namespace bcap {
inline constexpr const char* kVersion = "0.1.0";
}
