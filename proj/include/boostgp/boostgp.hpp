#pragma once

#include "boostgp/chain.hpp"
#include "boostgp/data.hpp"
#include "boostgp/densities.hpp"
#include "boostgp/diagnostics.hpp"
#include "boostgp/errors.hpp"
#include "boostgp/factor_cache.hpp"
#include "boostgp/hyperparams.hpp"
#include "boostgp/inference.hpp"
#include "boostgp/kernel.hpp"
#include "boostgp/mathutil.hpp"
#include "boostgp/rng.hpp"
#include "boostgp/sampler.hpp"
#include "boostgp/simulate.hpp"
#include "boostgp/version.hpp"
