#pragma once

#include "nfwave/core.hpp"

namespace nfwave {

// A traveling wave candidate or solution: stacked profile (u then v) and speed.
struct WaveState {
    Vec profile;
    double speed = 0.0;
};

}  // namespace nfwave
