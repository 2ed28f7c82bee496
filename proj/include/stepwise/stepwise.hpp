#pragma once

// Umbrella header for the stepwise simplification toolkit.

#include "stepwise/backends.hpp"
#include "stepwise/cascade.hpp"
#include "stepwise/corpus.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/exemplars.hpp"
#include "stepwise/fixtures.hpp"
#include "stepwise/http_backends.hpp"
#include "stepwise/levels.hpp"
#include "stepwise/metrics.hpp"
#include "stepwise/parallel.hpp"
#include "stepwise/planner.hpp"
#include "stepwise/prompting.hpp"
#include "stepwise/provenance.hpp"
#include "stepwise/reward.hpp"
