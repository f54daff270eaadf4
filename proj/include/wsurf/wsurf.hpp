#pragma once

#include "wsurf/errors.hpp"
#include "wsurf/time_grid.hpp"
#include "wsurf/rng.hpp"
#include "wsurf/node_field.hpp"
#include "wsurf/path_engine.hpp"
#include "wsurf/ensemble_io.hpp"
#include "wsurf/stats.hpp"
#include "wsurf/malliavin.hpp"
#include "wsurf/density.hpp"
#include "wsurf/surface.hpp"
#include "wsurf/sde.hpp"
#include "wsurf/csv.hpp"
#include "wsurf/runner.hpp"
