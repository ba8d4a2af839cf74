#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mtebounds/types.hpp"

namespace mte {

// LIV estimand as a function of the observed propensity. NaN signals a point
// outside the function's support; curve builders skip such values.
using LivFn = std::function<double(double)>;

// Feasible misclassification rates on a uniform grid over
// [0, min(alpha_bar, 1/2 - delta)]: those alpha with
// 0 <= (q - alpha)/(1 - 2*alpha) <= 1 for every observed propensity q.
std::vector<double> alpha_identified_set(std::span<const double> q_values, double alpha_bar,
                                         int grid_size);

// Inversion P = (q - alpha)/(1 - 2*alpha) under symmetric misclassification.
double true_pscore_from_alpha(double q, double alpha);

// MTE family member: (1 - 2*alpha) * LIV((1 - 2*alpha) * p + alpha).
double mte_symmetric(double p, double alpha, const LivFn& liv);

// Per p, the envelope [min, max] over the alpha grid of the family members
// whose LIV argument lies in the function's support.
BoundCurve symmetric_family_curve(const Grid& p_grid, std::span<const double> alpha_grid,
                                  const LivFn& liv);

}  // namespace mte
