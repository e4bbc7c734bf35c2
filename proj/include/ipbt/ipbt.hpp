#pragma once

// Core library: everything except YAML experiment configs (config.hpp) and
// the command implementations (cli.hpp), which additionally need yaml-cpp.
#include "ipbt/baselines.hpp"
#include "ipbt/engine.hpp"
#include "ipbt/gp.hpp"
#include "ipbt/hpspace.hpp"
#include "ipbt/population.hpp"
#include "ipbt/random.hpp"
#include "ipbt/restart.hpp"
#include "ipbt/serialize.hpp"
#include "ipbt/stagnation.hpp"
#include "ipbt/stats.hpp"
#include "ipbt/trainable.hpp"
#include "ipbt/trainables.hpp"
