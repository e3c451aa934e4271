#pragma once

#include "bmx/error.hpp"
#include "bmx/scalar_fn.hpp"
#include "bmx/quadrature.hpp"
#include "bmx/report.hpp"
#include "bmx/parallel.hpp"
#include "bmx/specfun.hpp"
#include "bmx/transforms.hpp"
#include "bmx/ode.hpp"
#include "bmx/priors.hpp"
#include "bmx/marginals.hpp"
#include "bmx/estimators.hpp"
#include "bmx/conditions.hpp"
#include "bmx/io.hpp"
