#pragma once

// Umbrella header.
#include "gcfa/analytics.hpp"
#include "gcfa/baselines.hpp"
#include "gcfa/data.hpp"
#include "gcfa/diagnostics.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/error.hpp"
#include "gcfa/factor_algebra.hpp"
#include "gcfa/gibbs.hpp"
#include "gcfa/io.hpp"
#include "gcfa/parallel.hpp"
#include "gcfa/replication.hpp"
#include "gcfa/simulation.hpp"
#include "gcfa/stochastic.hpp"
