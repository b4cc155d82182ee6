#pragma once

namespace lrlab {
inline constexpr const char* kToolVersion = "lrlab 0.1.0";
}
