#pragma once

namespace bait {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bait
