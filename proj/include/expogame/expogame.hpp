#pragma once

#include "expogame/audit.hpp"
#include "expogame/core.hpp"
#include "expogame/game.hpp"
#include "expogame/hardmax.hpp"
#include "expogame/lne.hpp"
#include "expogame/lp.hpp"
#include "expogame/mf.hpp"
#include "expogame/scenarios.hpp"
#include "expogame/sphere.hpp"
