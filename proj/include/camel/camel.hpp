#pragma once

#include "camel/cccp.hpp"
#include "camel/dual_solver.hpp"
#include "camel/exact.hpp"
#include "camel/io.hpp"
#include "camel/lbfgs.hpp"
#include "camel/lbp.hpp"
#include "camel/math.hpp"
#include "camel/metrics.hpp"
#include "camel/model.hpp"
#include "camel/objective.hpp"
#include "camel/synth.hpp"
