#include "molgen/elements.hpp"

namespace molgen {

namespace {

struct ElementInfo {
  std::string_view symbol;
  double covalent_radius;  // A
  double mass;             // amu
  int valence;
  int max_valence;
};

// Channel order C, H, O, N, F, S, Cl, Br.
constexpr ElementInfo kInfo[kNumElements] = {
    {"C", 0.77, 12.011, 4, 4},  {"H", 0.32, 1.008, 1, 1},
    {"O", 0.73, 15.999, 2, 2},  {"N", 0.75, 14.007, 3, 3},
    {"F", 0.71, 18.998, 1, 1},  {"S", 1.05, 32.060, 2, 6},
    {"Cl", 1.02, 35.450, 1, 1}, {"Br", 1.20, 79.904, 1, 1},
};

}  // namespace

std::string_view element_symbol(Element e) {
  return kInfo[static_cast<int>(e)].symbol;
}

std::optional<Element> element_from_symbol(std::string_view symbol) {
  for (int i = 0; i < kNumElements; ++i) {
    if (kInfo[i].symbol == symbol) return static_cast<Element>(i);
  }
  return std::nullopt;
}

double covalent_radius(Element e) {
  return kInfo[static_cast<int>(e)].covalent_radius;
}

double atomic_mass(Element e) { return kInfo[static_cast<int>(e)].mass; }

int default_valence(Element e) { return kInfo[static_cast<int>(e)].valence; }

int max_allowed_valence(Element e) {
  return kInfo[static_cast<int>(e)].max_valence;
}

}  // namespace molgen
