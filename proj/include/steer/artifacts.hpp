#pragma once

#include "steer/dialogue.hpp"
#include "steer/parser.hpp"
#include "steer/persona.hpp"
#include "steer/scorer.hpp"
#include "steer/textmetrics.hpp"
#include "steer/trait.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace steer {

struct ParseFailure {
    std::string request_tag;
    ParseError::Code code = ParseError::Code::Empty;
    std::string message;
    std::size_t found = 0;
    std::size_t expected = 0;
    std::string token;
    std::size_t position = 0;  // byte offset into that tag's raw text
};

struct ConditionTextMetrics {
    std::optional<TextStats> stats;  // absent for empty responses
    std::optional<SentimentResult> sentiment;  // absent without a lexicon
    double relevance = 0.0;  // embedding cosine of questionnaire and response
};

struct ConditionResult {
    Trait condition = Trait::Openness;
    std::vector<std::string> request_tags;  // one per batch, in order
    std::optional<RatingSheet> sheet;
    std::optional<TraitScores> scores;
    std::optional<ParseFailure> parse_failure;
    std::string backend_error;
    bool transport_failure = false;
    ConditionTextMetrics text;

    bool ok() const { return scores.has_value(); }
};

struct DialogueResult {
    Transcript transcript;
    FidelityReport fidelity;
};

// Everything a report is computed from. The timestamps are the only
// non-deterministic fields and are written to the manifest alone.
struct RunManifest {
    std::string kind;  // "ocean" or "dialogue"
    std::string tool_version;
    std::string backend_identity;
    std::string backend_kind;
    std::string model;
    std::string inventory_source;
    std::string parse_policy;
    std::string batching;
    std::vector<Trait> conditions;
    std::uint64_t seed = 0;
    std::string temperature;  // "unset" when not configured
    std::string max_tokens;
    std::string started_at;
    std::string finished_at;
    std::string rescored_from;  // set by rescore
    std::string previous_parse_policy;  // set by rescore when the policy changed
};

struct RunArtifacts {
    RunManifest manifest;
    std::filesystem::path out_dir;
    std::map<std::string, std::string> raw;  // request_tag -> response text
    std::vector<ConditionResult> conditions;  // canonical O,C,E,A,N order
    std::optional<AlignmentMatrix> matrix;    // present when all five succeeded
    std::optional<SteerabilityMetrics> metrics;
    std::optional<DialogueResult> dialogue;
    std::string report;
    int exit_code = 0;
};

} // namespace steer
