#pragma once

#include "categorical.hpp"
#include "causal.hpp"
#include "environment.hpp"
#include "features.hpp"
#include "glm.hpp"
#include "io.hpp"
#include "log.hpp"
#include "policy.hpp"
#include "policy_search.hpp"
#include "rng.hpp"
#include "scenarios.hpp"
