#pragma once

#include "steer/trait.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

enum class Polarity { Positive, Negative };

struct Item {
    int id = 0;
    std::string text;
    Trait trait = Trait::Openness;
    Polarity polarity = Polarity::Positive;

    friend bool operator==(const Item&, const Item&) = default;
};

struct Inventory {
    std::vector<Item> items;
    int scale_min = 1;
    int scale_max = 5;
    TraitMap<int> trait_constants{};

    std::vector<int> item_ids() const;
    const Item* find(int id) const;

    friend bool operator==(const Inventory&, const Inventory&) = default;
};

// Score range a trait can take under an inventory's keying.
struct TraitBounds {
    int min = 0;
    int max = 0;
};

TraitBounds trait_bounds(const Inventory& inv, Trait t);

struct Diagnostic {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Error;
    std::string field;   // e.g. "items[3].text"
    std::string message;
};

std::string to_string(const Diagnostic& d);

// Thrown by load_inventory. `diagnostics` is empty for syntax errors, which
// carry line/column in what().
class InventoryError : public std::runtime_error {
public:
    InventoryError(std::string what, std::vector<Diagnostic> diagnostics = {})
        : std::runtime_error(std::move(what)), diagnostics(std::move(diagnostics)) {}
    std::vector<Diagnostic> diagnostics;
};

// The 50-item IPIP Big Five markers with the standard key. Orientation of N
// is neuroticism (high = neurotic).
const Inventory& builtin_ipip50();

// One diagnostic per violated invariant. Warnings do not make an inventory
// unusable for rendering, but a trait with no items cannot be scored.
std::vector<Diagnostic> validate_inventory(const Inventory& inv);

// JSON inventory document:
//   {"scale": {"min": 1, "max": 5},
//    "constants": {"O": 8, "C": 14, ...},
//    "items": [{"id": 1, "text": "...", "trait": "E", "polarity": "+"}, ...]}
Inventory load_inventory(std::string_view document);
std::string serialize_inventory(const Inventory& inv);

// "1. <text>" per item, newline separated, no trailing newline.
std::string render_questionnaire(const Inventory& inv);

// Renders items [first, first + count) keeping their global numbering, so
// joining all chunks with '\n' gives render_questionnaire(inv).
std::string render_questionnaire_range(const Inventory& inv, std::size_t first,
                                       std::size_t count);

} // namespace steer
