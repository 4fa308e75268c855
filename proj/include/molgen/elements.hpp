#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace molgen {

// The 8-element vocabulary, in channel order: C, H, O, N, F, S, Cl, Br.
enum class Element : uint8_t { C = 0, H, O, N, F, S, Cl, Br };

inline constexpr int kNumElements = 8;

inline constexpr std::array<Element, kNumElements> kAllElements = {
    Element::C, Element::H,  Element::O, Element::N,
    Element::F, Element::S,  Element::Cl, Element::Br};

std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view symbol);

// Covalent radius in angstrom. Bond heuristic tolerance is +0.4 A on the sum.
double covalent_radius(Element e);

// Atomic mass (amu), used for fragment tie-breaking.
double atomic_mass(Element e);

// Neutral-charge default valence: C 4, N 3, O 2, F 1, S 2, Cl 1, Br 1, H 1.
int default_valence(Element e);

// Maximum allowed valence for the validity check (S may be hypervalent: 6).
int max_allowed_valence(Element e);

inline constexpr double kBondTolerance = 0.4;     // single-bond slack (A)
inline constexpr double kDoubleBondMargin = 0.15; // order 2 if d <= sum - this
inline constexpr double kTripleBondMargin = 0.25; // order 3 if d <= sum - this
inline constexpr double kHydrogenBondLength = 1.09;

}  // namespace molgen
