#pragma once

#include "npflow/types.hpp"
#include "npflow/report.hpp"
#include "npflow/refpotential.hpp"
#include "npflow/objectives.hpp"
#include "npflow/integrate.hpp"
#include "npflow/quadrature.hpp"
#include "npflow/certify.hpp"
#include "npflow/dualbridge.hpp"
