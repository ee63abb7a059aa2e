#include "steer/trait.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace steer {

namespace {

constexpr std::array<std::string_view, kTraitCount> kNames = {
    "Openness", "Conscientiousness", "Extroversion", "Agreeableness", "Neuroticism"};

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

} // namespace

char trait_letter(Trait t) { return "OCEAN"[index(t)]; }

std::string_view trait_name(Trait t) { return kNames[index(t)]; }

std::optional<Trait> parse_trait(std::string_view s) {
    for (Trait t : kAllTraits) {
        if (s.size() == 1 &&
            std::toupper(static_cast<unsigned char>(s[0])) == trait_letter(t))
            return t;
        if (iequals(s, trait_name(t)))
            return t;
    }
    if (iequals(s, "Extraversion"))
        return Trait::Extroversion;
    return std::nullopt;
}

Trait trait_from_string(std::string_view s) {
    if (auto t = parse_trait(s))
        return *t;
    throw std::invalid_argument("unknown trait '" + std::string(s) + "'");
}

} // namespace steer
