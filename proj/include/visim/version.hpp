#pragma once

namespace visim {

inline constexpr char kToolVersion[] = "visim 0.1.0";

}  // namespace visim
