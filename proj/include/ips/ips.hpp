#pragma once

#include "ips/duality.hpp"
#include "ips/error.hpp"
#include "ips/estimators.hpp"
#include "ips/graphical.hpp"
#include "ips/io.hpp"
#include "ips/lattice.hpp"
#include "ips/maps.hpp"
#include "ips/meanfield.hpp"
#include "ips/models.hpp"
#include "ips/parallel.hpp"
#include "ips/percolation.hpp"
#include "ips/rng.hpp"
#include "ips/stats.hpp"

namespace ips {
inline constexpr const char* version = "0.1.0";
}
