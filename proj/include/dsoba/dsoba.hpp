#pragma once

#include "dsoba/config.hpp"
#include "dsoba/csv.hpp"
#include "dsoba/engine.hpp"
#include "dsoba/error.hpp"
#include "dsoba/experiment.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/logcosh.hpp"
#include "dsoba/metrics.hpp"
#include "dsoba/oracles.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/quadratic.hpp"
#include "dsoba/ridge.hpp"
#include "dsoba/rng.hpp"
#include "dsoba/state.hpp"
#include "dsoba/topology.hpp"
