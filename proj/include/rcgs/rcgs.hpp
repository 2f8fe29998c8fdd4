#pragma once

#include "rcgs/diagnostics.hpp"
#include "rcgs/errors.hpp"
#include "rcgs/isometrize.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/linear_gs.hpp"
#include "rcgs/random.hpp"
#include "rcgs/reservoir.hpp"
#include "rcgs/sources.hpp"
