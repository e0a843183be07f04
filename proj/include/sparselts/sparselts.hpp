#pragma once

#include "sparselts/core.hpp"
#include "sparselts/csv.hpp"
#include "sparselts/lasso.hpp"
#include "sparselts/parallel.hpp"
#include "sparselts/prob.hpp"
#include "sparselts/rng.hpp"
#include "sparselts/selection.hpp"
#include "sparselts/simulation.hpp"
#include "sparselts/sparse_lts.hpp"
#include "sparselts/version.hpp"
