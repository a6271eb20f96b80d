#pragma once

#include <cstdint>
#include <vector>

namespace stpnet {

/// Per-unit clamping request. Free units are left to the sampler.
enum class Clamp : std::int8_t { Free = -1, Off = 0, On = 1 };

using ClampMask = std::vector<Clamp>;

}  // namespace stpnet
