/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pulse/common.hpp"
#include "pulse/fp.hpp"
#include "pulse/harness.hpp"
#include "pulse/localsearch.hpp"
#include "pulse/lp.hpp"
#include "pulse/mps.hpp"
#include "pulse/parallel.hpp"
#include "pulse/probing.hpp"
#include "pulse/problem.hpp"
#include "pulse/propagation.hpp"
#include "pulse/rounding.hpp"
