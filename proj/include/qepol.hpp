#pragma once

#include "qepol/angle_stats.hpp"
#include "qepol/correlation.hpp"
#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/geometry.hpp"
#include "qepol/lifetime.hpp"
#include "qepol/lm.hpp"
#include "qepol/photophysics.hpp"
#include "qepol/polarization.hpp"
#include "qepol/rng.hpp"
#include "qepol/shg.hpp"
#include "qepol/simulator.hpp"
#include "qepol/spot.hpp"
#include "qepol/sweep.hpp"
#include "qepol/tdm.hpp"
#include "qepol/tdm_fixtures.hpp"
#include "qepol/timetag.hpp"
#include "qepol/io/csv.hpp"
#include "qepol/io/report.hpp"
#include "qepol/io/ttag.hpp"
#include "qepol/io/wfg.hpp"
