#pragma once

#include "pmuplace/covariance.hpp"
#include "pmuplace/errors.hpp"
#include "pmuplace/grid.hpp"
#include "pmuplace/grid_io.hpp"
#include "pmuplace/measurement.hpp"
#include "pmuplace/placement.hpp"
#include "pmuplace/projection.hpp"
#include "pmuplace/state_estimation.hpp"
#include "pmuplace/types.hpp"
