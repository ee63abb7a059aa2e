#include "steer/scorer.hpp"

#include <algorithm>

namespace steer {

RatingSheet RatingSheet::from_ratings(Trait condition, const std::vector<Rating>& ratings) {
    RatingSheet s;
    s.condition = condition;
    for (const auto& r : ratings)
        s.ratings[r.item_id] = r.value;
    return s;
}

TraitScores score_traits(const RatingSheet& sheet, const Inventory& inv) {
    std::vector<int> missing;
    for (const auto& item : inv.items)
        if (!sheet.ratings.count(item.id))
            missing.push_back(item.id);
    std::vector<int> unexpected;
    for (const auto& [id, _] : sheet.ratings)
        if (!inv.find(id))
            unexpected.push_back(id);
    if (!missing.empty() || !unexpected.empty()) {
        std::string msg = "incomplete rating sheet for " + std::string(trait_name(sheet.condition));
        auto append = [&msg](const char* label, const std::vector<int>& ids) {
            if (ids.empty())
                return;
            msg += std::string("; ") + label + ":";
            for (int id : ids)
                msg += " " + std::to_string(id);
        };
        append("missing", missing);
        append("unexpected", unexpected);
        missing.insert(missing.end(), unexpected.begin(), unexpected.end());
        throw ScoreError(ScoreError::Code::IncompleteSheet, msg, std::move(missing));
    }

    std::vector<int> outside;
    for (const auto& [id, r] : sheet.ratings)
        if (r < inv.scale_min || r > inv.scale_max)
            outside.push_back(id);
    if (!outside.empty()) {
        const std::string msg = "rating outside " + std::to_string(inv.scale_min) + ".." +
                                std::to_string(inv.scale_max) + " for item " + std::to_string(outside.front());
        throw ScoreError(ScoreError::Code::OutOfScale, msg, std::move(outside));
    }

    TraitScores scores = inv.trait_constants;
    for (const auto& item : inv.items) {
        const int r = sheet.ratings.at(item.id);
        scores[index(item.trait)] += item.polarity == Polarity::Positive ? r : -r;
    }
    return scores;
}

AlignmentMatrix build_alignment_matrix(const std::vector<RatingSheet>& sheets, const Inventory& inv) {
    TraitMap<const RatingSheet*> by_trait{};
    for (const auto& s : sheets) {
        auto& slot = by_trait[index(s.condition)];
        if (slot)
            throw ScoreError(ScoreError::Code::DuplicateCondition,
                             "two sheets for condition " + std::string(trait_name(s.condition)));
        slot = &s;
    }
    AlignmentMatrix m;
    for (Trait t : kAllTraits) {
        if (!by_trait[index(t)])
            throw ScoreError(ScoreError::Code::MissingCondition,
                             "no sheet for condition " + std::string(trait_name(t)));
        m.cells[index(t)] = score_traits(*by_trait[index(t)], inv);
    }
    return m;
}

double normalize_score(int score, TraitBounds b) {
    if (b.max == b.min)
        return 0.0;
    return static_cast<double>(score - b.min) / static_cast<double>(b.max - b.min);
}

SteerabilityMetrics steerability_metrics(const AlignmentMatrix& m, const Inventory& inv) {
    SteerabilityMetrics out;
    for (Trait s : kAllTraits)
        out.bounds[index(s)] = trait_bounds(inv, s);

    for (Trait p : kAllTraits) {
        const int target = m.at(p, p);
        int best_off = 0;
        bool first = true;
        for (Trait s : kAllTraits) {
            if (s == p)
                continue;
            best_off = first ? m.at(p, s) : std::max(best_off, m.at(p, s));
            first = false;
        }
        out.delta[index(p)] = target - best_off;
        if (target >= best_off)
            ++out.hits_inclusive;
        if (target > best_off)
            ++out.hits_strict;
        for (Trait s : kAllTraits)
            out.normalized[index(p)][index(s)] = normalize_score(m.at(p, s), out.bounds[index(s)]);
    }
    out.argmax_hits_inclusive = out.hits_inclusive / static_cast<double>(kTraitCount);
    out.argmax_hits_strict = out.hits_strict / static_cast<double>(kTraitCount);
    return out;
}

} // namespace steer
