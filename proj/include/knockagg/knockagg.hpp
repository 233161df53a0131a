#pragma once

#include "knockagg/baselines.hpp"
#include "knockagg/config.hpp"
#include "knockagg/coordinator.hpp"
#include "knockagg/error.hpp"
#include "knockagg/format.hpp"
#include "knockagg/io.hpp"
#include "knockagg/knockoff.hpp"
#include "knockagg/lasso.hpp"
#include "knockagg/node.hpp"
#include "knockagg/numerics.hpp"
#include "knockagg/random.hpp"
#include "knockagg/simlab.hpp"
#include "knockagg/wire.hpp"
