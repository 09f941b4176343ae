#pragma once

#include "otto/config.hpp"
#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/errors.hpp"
#include "otto/lgl.hpp"
#include "otto/ode.hpp"
#include "otto/parallel.hpp"
#include "otto/reference.hpp"
#include "otto/sde.hpp"
#include "otto/solver.hpp"
#include "otto/transcription.hpp"
