#pragma once

#include <cstddef>

namespace hmd {

// Reserved vocabulary indices.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

}  // namespace hmd
