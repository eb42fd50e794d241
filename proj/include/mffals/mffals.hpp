#pragma once

#include "mffals/acquisition.hpp"
#include "mffals/cartpole.hpp"
#include "mffals/cost_model.hpp"
#include "mffals/environment.hpp"
#include "mffals/error.hpp"
#include "mffals/falsifier.hpp"
#include "mffals/gp.hpp"
#include "mffals/idm.hpp"
#include "mffals/multifidelity.hpp"
#include "mffals/optimize.hpp"
#include "mffals/rng.hpp"
#include "mffals/space.hpp"
#include "mffals/spec_logic.hpp"
#include "mffals/synthetic.hpp"
