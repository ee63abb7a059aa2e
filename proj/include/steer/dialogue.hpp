#pragma once

#include "steer/backend.hpp"
#include "steer/parser.hpp"
#include "steer/persona.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

struct ContextPolicy {
    enum class Kind { FullHistory, LastK };
    Kind kind = Kind::FullHistory;
    std::size_t k = 0;  // LastK only

    static ContextPolicy full_history() { return {}; }
    static ContextPolicy last_k(std::size_t k);
    friend bool operator==(const ContextPolicy&, const ContextPolicy&) = default;
};

std::string describe(const ContextPolicy& p);

struct DialogueConfig {
    std::string id;  // used in request tags: dialogue/{id}/{turn}
    FigurePersona persona_a;  // answers the icebreaker
    FigurePersona persona_b;  // asked the icebreaker
    std::string icebreaker;
    int max_turns = 50;
    ContextPolicy context_policy;
    std::string model;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    PromptStyle style = PromptStyle::Chat;

    void validate() const;
};

// {"id", "persona_a", "persona_b", "icebreaker", "max_turns",
//  "context_policy": {"kind": "full_history" | "last_k", "k": N}}
// Persona fields are ids resolved against `lib`.
DialogueConfig load_dialogue_config(std::string_view document, const PersonaLibrary& lib);

struct Turn {
    std::size_t index = 0;
    std::string speaker;   // persona id
    std::string text;      // raw model output
    std::string cleaned;   // markup stripped, whitespace collapsed
    std::string request_tag;
    std::string timestamp; // empty for deterministic backends
};

enum class EndReason { TurnCap, BackendError, Stop, Incomplete };
std::string_view end_reason_name(EndReason r);
EndReason end_reason_from_string(std::string_view s);

struct ContextRetry {
    std::size_t turn_index = 0;
    std::size_t history_entries = 0;  // entries in the rejected request
    std::size_t k = 0;                // window used for the retry
    bool succeeded = false;
};

struct Transcript {
    std::string id;
    std::string persona_a;
    std::string persona_b;
    std::string icebreaker;
    int max_turns = 0;
    ContextPolicy context_policy;
    std::vector<Turn> turns;
    EndReason ended_by = EndReason::Incomplete;
    std::string error;  // set when ended_by == BackendError
    std::vector<ContextRetry> context_retries;
};

// Strips tags such as <p>, decodes basic entities, collapses whitespace.
std::string clean_turn_text(std::string_view raw);

class DialogueObserver {
public:
    virtual ~DialogueObserver() = default;
    virtual void on_start(const Transcript&) {}
    virtual void on_turn(const Turn&) {}
    virtual void on_context_retry(const ContextRetry&) {}
    virtual void on_end(const Transcript&) {}
};

// Persists a transcript as JSON lines while it is produced: a header record,
// one record per turn, retry records, and an end record. Every line is
// flushed so an interrupted run leaves a readable prefix.
class TranscriptWriter : public DialogueObserver {
public:
    explicit TranscriptWriter(const std::filesystem::path& path);
    explicit TranscriptWriter(std::ostream& out) : out_(&out) {}

    void on_start(const Transcript& t) override;
    void on_turn(const Turn& turn) override;
    void on_context_retry(const ContextRetry& r) override;
    void on_end(const Transcript& t) override;

private:
    void write(const std::string& line);
    std::ofstream file_;
    std::ostream* out_ = nullptr;
};

std::string serialize_transcript(const Transcript& t);
// Files without an end record load with ended_by == Incomplete.
Transcript parse_transcript(std::string_view content);
Transcript load_transcript(const std::filesystem::path& path);

// Messages for the turn about to be produced, as seen by its speaker.
MessageList dialogue_messages(const DialogueConfig& cfg, const std::vector<Turn>& turns,
                              const ContextPolicy& policy);

struct DialogueOptions {
    DialogueObserver* observer = nullptr;
    // Clock for turn timestamps when the backend is not deterministic.
    std::function<std::string()> clock;
};

// Turn 0 is persona_a answering the icebreaker; speakers alternate. Backend
// errors end the run and are recorded, never thrown. A context-overflow
// rejection is retried once with the history window halved.
Transcript run_dialogue(const DialogueConfig& cfg, Backend& backend, DialogueOptions opts = {});

struct DriftEvent {
    std::size_t turn_index = 0;
    std::string asserted_name;        // as written in the turn
    std::string asserted_persona_id;  // persona the name belongs to
    std::string expected_persona_id;  // the turn's speaker
    Span evidence_span;               // into the cleaned text
    std::string evidence;
};

class UnknownSpeaker : public std::invalid_argument {
public:
    explicit UnknownSpeaker(const std::string& id)
        : std::invalid_argument("speaker '" + id + "' is not in the persona library") {}
};

// Rule-based self-identification scan: "I am X", "my name is X", "as X," and
// closing signatures ("Sincerely, X"). Fires only when X is an alias of a
// library persona other than the speaker.
std::vector<DriftEvent> detect_identity_drift(const Transcript& t, const PersonaLibrary& lib);

// Lowercase words with punctuation removed; apostrophes are dropped.
std::vector<std::string> normalized_words(std::string_view text);

double ngram_jaccard(std::string_view a, std::string_view b, std::size_t n);

// Similarity to the same speaker's previous turn (0 for a speaker's first).
std::vector<double> repetition_score(const Transcript& t, std::size_t n = 3);
// Similarity to the counterpart's immediately preceding turn (0 for turn 0).
std::vector<double> mirror_score(const Transcript& t, std::size_t n = 3);

double mean(const std::vector<double>& v);

// Same speakers and indices with the turn texts permuted by a seeded shuffle.
Transcript shuffled_control(const Transcript& t, std::uint64_t seed);

struct FidelityReport {
    std::vector<DriftEvent> drift_events;
    std::vector<double> repetition;
    std::vector<double> mirroring;
    double mean_repetition = 0.0;
    double mean_mirroring = 0.0;
    double shuffled_mean_mirroring = 0.0;
    std::uint64_t shuffle_seed = 0;
    std::size_t ngram = 3;
};

FidelityReport analyze_transcript(const Transcript& t, const PersonaLibrary& lib,
                                  std::size_t n = 3, std::uint64_t seed = 0);

std::string serialize_fidelity(const FidelityReport& r);

} // namespace steer
