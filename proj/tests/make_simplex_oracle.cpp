// Writes the weighted centroid of the unit simplex found from the surface-integral form of F.
#include "support/surface_oracle.hpp"

#include <json.hpp>

#include <iostream>

int main() {
  using ellobst::make_vec;
  const std::vector<ellobst::Vec> v = {make_vec({0, 0, 0}), make_vec({1, 0, 0}), make_vec({0, 1, 0}),
                                       make_vec({0, 0, 1})};
  const auto x0 = ellobst::oracle::oracle_root(v);
  nlohmann::ordered_json vertices = nlohmann::ordered_json::array();
  for (const auto& p : v) vertices.push_back({p[0], p[1], p[2]});
  nlohmann::ordered_json doc{{"body", {{"kind", "simplex"}, {"vertices", vertices}}},
                             {"method", "Newton on the surface-integral gravity, Duffy Gauss-Legendre 48x48 per face"},
                             {"x0", {x0[0], x0[1], x0[2]}}};
  std::cout << doc.dump(2) << '\n';
}
