#pragma once

// Simulation and inference toolkit for (2,1) random walks in i.i.d.
// parametric random environments.

#include "rwre/bpire.hpp"
#include "rwre/config.hpp"
#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/estimate.hpp"
#include "rwre/likelihood.hpp"
#include "rwre/parallel.hpp"
#include "rwre/random.hpp"
#include "rwre/spectral.hpp"
#include "rwre/walk.hpp"

namespace rwre {
inline constexpr const char* kVersion = "0.1.0";
}
