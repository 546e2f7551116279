#pragma once

// Everything except the CLI layer.
#include "ridemix/coupling.hpp"
#include "ridemix/fit.hpp"
#include "ridemix/lower_bound.hpp"
#include "ridemix/mdp.hpp"
#include "ridemix/mixing.hpp"
#include "ridemix/replay.hpp"
#include "ridemix/simulator.hpp"
#include "ridemix/stationary.hpp"
#include "ridemix/transition.hpp"
#include "ridemix/trips.hpp"
