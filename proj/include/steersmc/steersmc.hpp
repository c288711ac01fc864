#pragma once

#include "steersmc/error.hpp"
#include "steersmc/rng.hpp"
#include "steersmc/text.hpp"
#include "steersmc/vocabulary.hpp"
#include "steersmc/token_model.hpp"
#include "steersmc/ngram.hpp"
#include "steersmc/model_io.hpp"
#include "steersmc/remote_model.hpp"
#include "steersmc/constraints.hpp"
#include "steersmc/plan.hpp"
#include "steersmc/particle.hpp"
#include "steersmc/steering.hpp"
#include "steersmc/engine.hpp"
#include "steersmc/oracle.hpp"
#include "steersmc/metrics.hpp"
#include "steersmc/tasks.hpp"
#include "steersmc/planner.hpp"
