#pragma once

#include "steer/artifacts.hpp"
#include "steer/backend.hpp"
#include "steer/dialogue.hpp"
#include "steer/inventory.hpp"
#include "steer/parser.hpp"
#include "steer/persona.hpp"
#include "steer/report.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace steer {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitPartialFailure = 1,
    kExitConfigError = 2,
    kExitBackendUnreachable = 3,
};

// Directory holding the shipped fixtures, persona library and lexicon. The
// STEER_DATA_DIR environment variable overrides the build-time location.
std::filesystem::path default_data_dir();

struct RunConfig {
    BackendConfig backend;
    std::filesystem::path inventory_path;  // empty = builtin IPIP-50
    std::vector<Trait> conditions{kAllTraits.begin(), kAllTraits.end()};
    ParsePolicy policy = ParsePolicy::strict();
    Batching batching;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    std::filesystem::path lexicon_path;  // empty = shipped lexicon when present

    // Both throw ConfigError. The first skips the backend section, which is
    // irrelevant when a backend instance is supplied directly.
    void validate_run() const;
    void validate() const;
};

// {"backend": {...}, "inventory": "builtin" | path, "conditions": ["O", ...],
//  "parse_policy": "strict" | "lenient", "batch_size": 0, "out_dir": path,
//  "seed": 0, "lexicon": path}
RunConfig load_run_config(std::string_view document);
RunConfig load_run_config_file(const std::filesystem::path& path);

struct HarnessOptions {
    std::function<std::string()> clock;  // manifest timestamps; UTC now by default
};

// Runs the survey for each configured condition against `backend` and writes
// the run directory: raw/, raw_index.json, manifest.json, sheets.json,
// matrix.csv, metrics.json, radar.svg (when all five conditions scored) and
// report.md. Raw text is written before any parsing.
RunArtifacts run_ocean_experiment(const RunConfig& cfg, Backend& backend, HarnessOptions opts = {});
RunArtifacts run_ocean_experiment(const RunConfig& cfg, HarnessOptions opts = {});

// Recomputes every derived artifact of an ocean run from its raw responses.
// Writes into `out_dir`, or back into `run_dir` when empty.
RunArtifacts rescore(const std::filesystem::path& run_dir,
                     std::optional<ParsePolicy> policy = std::nullopt,
                     const std::filesystem::path& out_dir = {}, HarnessOptions opts = {});

// Scores a ratings document ({"sheets": [{"condition", "ratings": {"1": 4}}]})
// without any backend.
RunArtifacts score_sheets(std::string_view sheets_json, const Inventory& inv,
                          const std::filesystem::path& out_dir, HarnessOptions opts = {});

struct DialogueRunConfig {
    BackendConfig backend;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    std::size_t ngram = 3;
};

// Writes transcript.jsonl (incrementally), fidelity.json, manifest.json and
// report.md.
RunArtifacts run_dialogue_experiment(const DialogueRunConfig& cfg, DialogueConfig dialogue,
                                     const PersonaLibrary& lib, Backend& backend,
                                     HarnessOptions opts = {});

// Fidelity analysis of a persisted transcript; writes fidelity.json and
// report.md when `out_dir` is set.
RunArtifacts analyze_dialogue(const Transcript& t, const PersonaLibrary& lib, std::uint64_t seed,
                              std::size_t ngram, const std::filesystem::path& out_dir);

// Raw response file name for a request tag ("ocean/O" -> "ocean_O.txt").
std::string raw_file_name(std::string_view tag);

std::string ocean_request_tag(Trait t, std::size_t batch, std::size_t batch_count);

} // namespace steer
