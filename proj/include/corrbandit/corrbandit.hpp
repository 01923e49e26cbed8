#pragma once

#include "corrbandit/belief.hpp"
#include "corrbandit/environments.hpp"
#include "corrbandit/errors.hpp"
#include "corrbandit/exact_planner.hpp"
#include "corrbandit/gaussian.hpp"
#include "corrbandit/harness.hpp"
#include "corrbandit/mvn.hpp"
#include "corrbandit/policies.hpp"
#include "corrbandit/rng.hpp"
#include "corrbandit/wilcoxon.hpp"
