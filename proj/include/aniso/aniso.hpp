#pragma once

#include "aniso/degenerate.hpp"
#include "aniso/errors.hpp"
#include "aniso/io.hpp"
#include "aniso/model.hpp"
#include "aniso/polar.hpp"
#include "aniso/relaxation.hpp"
#include "aniso/scenarios.hpp"
#include "aniso/trajectory.hpp"
#include "aniso/vec.hpp"
