#pragma once

#include "tumorcal/calibration.hpp"
#include "tumorcal/checkpoint.hpp"
#include "tumorcal/comparison.hpp"
#include "tumorcal/dataset.hpp"
#include "tumorcal/error.hpp"
#include "tumorcal/growth_models.hpp"
#include "tumorcal/noise_model.hpp"
#include "tumorcal/ode_solver.hpp"
#include "tumorcal/parallel.hpp"
#include "tumorcal/priors.hpp"
#include "tumorcal/random.hpp"
#include "tumorcal/smc.hpp"
#include "tumorcal/special_functions.hpp"
