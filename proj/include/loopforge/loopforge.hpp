#pragma once

#include "loopforge/closedloop.hpp"
#include "loopforge/errors.hpp"
#include "loopforge/harness.hpp"
#include "loopforge/lti.hpp"
#include "loopforge/objective.hpp"
#include "loopforge/rng.hpp"
#include "loopforge/simc.hpp"
#include "loopforge/tuner.hpp"
