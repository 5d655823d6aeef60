#pragma once

#include "pgee/correlation.hpp"
#include "pgee/data.hpp"
#include "pgee/error.hpp"
#include "pgee/penalty.hpp"
#include "pgee/report.hpp"
#include "pgee/simulation.hpp"
#include "pgee/solver.hpp"
#include "pgee/tuning.hpp"
