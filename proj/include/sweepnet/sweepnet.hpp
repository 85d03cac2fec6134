#pragma once

#include "sweepnet/types.hpp"
#include "sweepnet/network.hpp"
#include "sweepnet/secular.hpp"
#include "sweepnet/adiabatic.hpp"
#include "sweepnet/dynamics.hpp"
#include "sweepnet/scenario.hpp"
