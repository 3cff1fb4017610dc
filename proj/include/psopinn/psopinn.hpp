#pragma once

#include "psopinn/rng.hpp"
#include "psopinn/network.hpp"
#include "psopinn/autodiff.hpp"
#include "psopinn/cole_hopf.hpp"
#include "psopinn/pde.hpp"
#include "psopinn/oracle.hpp"
#include "psopinn/sampling.hpp"
#include "psopinn/loss.hpp"
#include "psopinn/optim.hpp"
#include "psopinn/ensemble.hpp"
#include "psopinn/harness.hpp"
#include "psopinn/checks.hpp"
