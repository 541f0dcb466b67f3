#pragma once

#include "xflat/bench.hpp"
#include "xflat/config.hpp"
#include "xflat/double_double.hpp"
#include "xflat/driver.hpp"
#include "xflat/error.hpp"
#include "xflat/exchange.hpp"
#include "xflat/grid.hpp"
#include "xflat/hamiltonian.hpp"
#include "xflat/hermitian.hpp"
#include "xflat/integrator.hpp"
#include "xflat/moments.hpp"
#include "xflat/snapshot.hpp"
#include "xflat/spectra.hpp"
#include "xflat/state.hpp"
#include "xflat/topology.hpp"
#include "xflat/validation.hpp"
