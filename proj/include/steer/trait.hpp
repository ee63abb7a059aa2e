#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace steer {

// Big Five axes in canonical order. The enumerator value is the axis index
// used by matrices and radar plots.
enum class Trait : std::size_t {
    Openness = 0,
    Conscientiousness = 1,
    Extroversion = 2,
    Agreeableness = 3,
    Neuroticism = 4,
};

inline constexpr std::size_t kTraitCount = 5;

inline constexpr std::array<Trait, kTraitCount> kAllTraits = {
    Trait::Openness, Trait::Conscientiousness, Trait::Extroversion,
    Trait::Agreeableness, Trait::Neuroticism};

constexpr std::size_t index(Trait t) { return static_cast<std::size_t>(t); }

// Single-letter code: O, C, E, A or N.
char trait_letter(Trait t);
std::string_view trait_name(Trait t);

// Accepts the letter, the full name, or "Extraversion", case-insensitively.
std::optional<Trait> parse_trait(std::string_view s);

// Same as parse_trait but throws std::invalid_argument.
Trait trait_from_string(std::string_view s);

// Per-trait lookup table.
template <typename T>
using TraitMap = std::array<T, kTraitCount>;

} // namespace steer
