#include "roughmal/one_form.hpp"

#include "roughmal/errors.hpp"

namespace roughmal {

OneForm::OneForm(SmoothMap map, int D, int E, int order, double growth_c)
    : map_(std::move(map)), D_(D), E_(E), order_(order), growth_c_(growth_c) {
  if (map_.in_dim() != D || map_.out_dim() != D * E) throw ArgumentError("one-form " + map_.name() + " has inconsistent shape");
  if (order < 1) throw ArgumentError("one-forms need derivatives of order >= 1");
  map_.validate(order);
}

OneForm OneForm::constant(int D, int E, std::vector<double> a) {
  if (a.size() != static_cast<std::size_t>(D) * E) throw ArgumentError("constant one-form has the wrong size");
  auto eval = [a](std::span<const double>, std::span<double> out) { std::copy(a.begin(), a.end(), out.begin()); };
  auto deriv = [a, D](std::span<const double>, int order, std::vector<double>& out) {
    std::size_t size = a.size();
    for (int q = 0; q < order; ++q) size *= D;
    out.assign(size, 0.0);
    if (order == 0) std::copy(a.begin(), a.end(), out.begin());
  };
  return OneForm(SmoothMap::from_callbacks("constant", D, E * D, eval, deriv), D, E, 4, 1.0);
}

void OneForm::derivatives(std::span<const double> x, int order, std::vector<std::vector<double>>& out) const {
  map_.derivatives(x, order, out);
}

}  // namespace roughmal
