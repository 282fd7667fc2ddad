#pragma once

// Convenience umbrella: pulls in every public module.

#include "voisim/augment.hpp"
#include "voisim/comm.hpp"
#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/discretize.hpp"
#include "voisim/env.hpp"
#include "voisim/experiment.hpp"
#include "voisim/linalg.hpp"
#include "voisim/markov.hpp"
#include "voisim/mlp.hpp"
#include "voisim/random_models.hpp"
#include "voisim/replay.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"
#include "voisim/tabular.hpp"
#include "voisim/td3.hpp"
#include "voisim/vehicle.hpp"
#include "voisim/voi.hpp"
