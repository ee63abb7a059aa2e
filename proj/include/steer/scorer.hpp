#pragma once

#include "steer/inventory.hpp"
#include "steer/parser.hpp"
#include "steer/trait.hpp"

#include <map>
#include <stdexcept>
#include <vector>

namespace steer {

// One prompting condition's answers: item id -> rating.
struct RatingSheet {
    Trait condition = Trait::Openness;
    std::map<int, int> ratings;

    static RatingSheet from_ratings(Trait condition, const std::vector<Rating>& ratings);
    friend bool operator==(const RatingSheet&, const RatingSheet&) = default;
};

using TraitScores = TraitMap<int>;

class ScoreError : public std::invalid_argument {
public:
    enum class Code { IncompleteSheet, MissingCondition, DuplicateCondition, OutOfScale };
    ScoreError(Code code, const std::string& what, std::vector<int> ids = {})
        : std::invalid_argument(what), code(code), ids(std::move(ids)) {}
    Code code;
    std::vector<int> ids;  // offending item ids for IncompleteSheet and OutOfScale
};

// score(t) = constant(t) + sum(positive-keyed) - sum(negative-keyed).
TraitScores score_traits(const RatingSheet& sheet, const Inventory& inv);

// Rows are prompted traits, columns scored traits: cells[prompted][scored].
struct AlignmentMatrix {
    TraitMap<TraitMap<int>> cells{};

    int at(Trait prompted, Trait scored) const { return cells[index(prompted)][index(scored)]; }
    int& at(Trait prompted, Trait scored) { return cells[index(prompted)][index(scored)]; }
    friend bool operator==(const AlignmentMatrix&, const AlignmentMatrix&) = default;
};

// Needs exactly one sheet per trait, in any order.
AlignmentMatrix build_alignment_matrix(const std::vector<RatingSheet>& sheets, const Inventory& inv);

struct SteerabilityMetrics {
    TraitMap<int> delta{};     // target minus best off-target, per prompted trait
    int hits_inclusive = 0;    // rows whose target ties for the maximum
    int hits_strict = 0;       // rows whose target is the unique maximum
    double argmax_hits_inclusive = 0.0;
    double argmax_hits_strict = 0.0;
    TraitMap<TraitMap<double>> normalized{};  // [prompted][scored] in [0, 1]
    TraitMap<TraitBounds> bounds{};           // normalization bounds per scored trait
};

SteerabilityMetrics steerability_metrics(const AlignmentMatrix& m,
                                         const Inventory& inv = builtin_ipip50());

// (score - min) / (max - min) with the inventory's bounds; 0 when max == min.
double normalize_score(int score, TraitBounds b);

} // namespace steer
