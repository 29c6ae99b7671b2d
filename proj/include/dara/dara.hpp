#pragma once

#include "dara/core.hpp"
#include "dara/mdp.hpp"
#include "dara/dataset.hpp"
#include "dara/mlp.hpp"
#include "dara/classifier.hpp"
#include "dara/augment.hpp"
#include "dara/offline_rl.hpp"
#include "dara/eval.hpp"
#include "dara/config.hpp"
