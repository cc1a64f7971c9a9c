#pragma once

#include "common.hpp"
#include "scattering.hpp"
#include "contour.hpp"
#include "kernel.hpp"
#include "series.hpp"
#include "solution.hpp"
#include "verify.hpp"
#include "io.hpp"
#include "suites.hpp"
