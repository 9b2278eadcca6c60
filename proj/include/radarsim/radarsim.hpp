#pragma once

#include "radarsim/checkpoint.hpp"
#include "radarsim/evalkit.hpp"
#include "radarsim/grid.hpp"
#include "radarsim/io.hpp"
#include "radarsim/models.hpp"
#include "radarsim/objectives.hpp"
#include "radarsim/profiles.hpp"
#include "radarsim/rng.hpp"
#include "radarsim/trainer.hpp"
#include "radarsim/version.hpp"
#include "radarsim/worldsim.hpp"
