#pragma once

#include <random>

namespace scqa {

/// Engine behind every seeded draw (initialization, sampling, channels).
using Rng = std::mt19937_64;

}  // namespace scqa
