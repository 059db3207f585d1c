#pragma once

// Umbrella header.

#include "gevrey/combinatorics.hpp"
#include "gevrey/envelopes.hpp"
#include "gevrey/errors.hpp"
#include "gevrey/implicit_diff.hpp"
#include "gevrey/parametric.hpp"
#include "gevrey/pde1d.hpp"
#include "gevrey/scalar_problems.hpp"
#include "gevrey/version.hpp"
