#pragma once

#include "roughmal/one_form.hpp"
#include "roughmal/path.hpp"
#include "roughmal/roughpath.hpp"

namespace roughmal {

// t ↦ ∫_0^t f dg. f has dim E·D (row-major E×D matrices), g has dim D; result has dim E.
// Paths on different levels are refined to the finer one; the output lives there.
// Refuses unless 1/p + 1/q > 1.
SampledPath young_integral(const SampledPath& f, const SampledPath& g, double q, double p);

struct RoughIntegralOptions {
  double tolerance = 1e-10;  // defect per cell ≤ tolerance · ω(cell) + absolute_floor
  double absolute_floor = 1e-14;
  int max_depth = 14;        // dyadic halvings per cell
};

// Joint lift (x, ∫ f(x) dx) over R^D ⊕ R^E on the grid of x, started at (x_0, 0).
RoughPathGrid rough_integral(const OneForm& f, const RoughPathGrid& x, const RoughIntegralOptions& opts = {});

}  // namespace roughmal
