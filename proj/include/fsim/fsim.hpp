#pragma once

#include "fsim/certify.hpp"
#include "fsim/convex.hpp"
#include "fsim/expr.hpp"
#include "fsim/field.hpp"
#include "fsim/lyapunov.hpp"
#include "fsim/output.hpp"
#include "fsim/scenario.hpp"
#include "fsim/simulate.hpp"
