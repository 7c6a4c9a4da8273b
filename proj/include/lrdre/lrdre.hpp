#pragma once

// Low-rank splitting solvers for differential Riccati equations
//
//   P' = A^T P + P A + Q - P S P,   P(0) = P0.

#include "lrdre/error.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/problem.hpp"
#include "lrdre/quadrature.hpp"
#include "lrdre/subflows.hpp"
#include "lrdre/coefficients.hpp"
#include "lrdre/schemes.hpp"
#include "lrdre/adaptive.hpp"
#include "lrdre/oracle.hpp"
#include "lrdre/generate.hpp"
