// Command-line front end: ocean runs, rescoring, dialogues and reports.

#include "steer/harness.hpp"
#include "steer/report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace steer;

namespace {

struct Global {
    std::string config;
    std::string backend;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string fixture;
    std::string model;
    std::string base_url;
    std::string scripted_text;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void apply_backend_flags(const Global& g, BackendConfig& b, const fs::path& default_fixture) {
    if (!g.backend.empty()) {
        try {
            b.kind = backend_kind_from_string(g.backend);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (!g.fixture.empty())
        b.fixture = g.fixture;
    if (!g.model.empty())
        b.model = g.model;
    if (!g.base_url.empty())
        b.base_url = g.base_url;
    if (!g.scripted_text.empty())
        b.scripted_text = g.scripted_text;
    if (b.kind == BackendKind::Replay && b.fixture.empty())
        b.fixture = default_fixture;
}

RunConfig base_config(const Global& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config_file(g.config);
    if (!g.out.empty())
        cfg.out_dir = g.out;
    if (g.seed)
        cfg.seed = *g.seed;
    return cfg;
}

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << content;
}

PersonaLibrary personas(const std::string& path) {
    const fs::path p = path.empty() ? default_data_dir() / "personas.json" : fs::path(path);
    return load_persona_library(read_file(p));
}

void print_summary(const RunArtifacts& run) {
    for (const auto& c : run.conditions) {
        std::cout << trait_letter(c.condition) << ": ";
        if (c.scores) {
            for (Trait t : kAllTraits)
                std::cout << (t == Trait::Openness ? "" : ",") << (*c.scores)[index(t)];
        } else if (c.parse_failure) {
            std::cout << "parse error (" << code_name(c.parse_failure->code) << ") "
                      << c.parse_failure->message;
        } else {
            std::cout << "backend error: " << c.backend_error;
        }
        std::cout << '\n';
    }
    if (run.metrics) {
        std::cout << "delta:";
        for (Trait t : kAllTraits)
            std::cout << ' ' << trait_letter(t) << '=' << run.metrics->delta[index(t)];
        std::cout << "\nargmax hit rate: inclusive " << run.metrics->hits_inclusive << "/5, strict "
                  << run.metrics->hits_strict << "/5\n";
    }
    if (!run.out_dir.empty())
        std::cout << "artifacts: " << run.out_dir.string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persona steerability experiments: OCEAN surveys and persona dialogues"};
    app.require_subcommand(1);
    app.fallthrough();

    Global g;
    app.add_option("--config", g.config, "Run config JSON file");
    app.add_option("--backend", g.backend, "Backend kind")->check(CLI::IsMember({"http", "replay", "scripted"}));
    app.add_option("--out", g.out, "Output directory (or file for report commands)");
    app.add_option("--seed", g.seed, "Seed for randomized analyses");
    app.add_option("--fixture", g.fixture, "Replay fixture (JSON lines)");
    app.add_option("--model", g.model, "Model name");
    app.add_option("--base-url", g.base_url, "API base URL for the http backend");
    app.add_option("--scripted-text", g.scripted_text, "Constant reply for the scripted backend");

    // ocean
    auto* ocean = app.add_subcommand("ocean", "OCEAN survey experiments");
    ocean->require_subcommand(1);
    auto* ocean_run = ocean->add_subcommand("run", "Survey each prompted trait and score the answers");
    std::string conditions, policy_name, inventory_path;
    std::size_t batch_size = 0;
    bool batch_set = false;
    ocean_run->add_option("--conditions", conditions, "Traits to prompt, e.g. OCEAN or N");
    ocean_run->add_option("--policy", policy_name, "Parse policy")->check(CLI::IsMember({"strict", "lenient"}));
    ocean_run->add_option("--inventory", inventory_path, "Inventory JSON (default: builtin IPIP-50)");
    ocean_run->add_option("--batch-size", batch_size, "Items per request (0 = whole survey)")
        ->each([&](const std::string&) { batch_set = true; });

    auto* ocean_score = ocean->add_subcommand("score", "Score offline from a run directory or ratings file");
    std::string from_dir, ratings_file;
    std::string score_policy;
    auto* from_opt = ocean_score->add_option("--from", from_dir, "Run directory with raw responses");
    auto* ratings_opt = ocean_score->add_option("--ratings", ratings_file, "Ratings JSON (sheets.json layout)");
    from_opt->excludes(ratings_opt);
    ocean_score->add_option("--policy", score_policy, "Parse policy override")
        ->check(CLI::IsMember({"strict", "lenient"}));

    // dialogue
    auto* dialogue = app.add_subcommand("dialogue", "Persona dialogue experiments");
    dialogue->require_subcommand(1);
    auto* dlg_run = dialogue->add_subcommand("run", "Run a two-persona dialogue");
    std::string dlg_file, dlg_id, persona_path;
    int max_turns = 0;
    std::size_t context_k = 0;
    std::size_t ngram = 3;
    dlg_run->add_option("--dialogue", dlg_file, "Dialogue config JSON");
    dlg_run->add_option("--id", dlg_id, "Shipped dialogue id, e.g. gandhi_mandela");
    dlg_run->add_option("--personas", persona_path, "Persona library JSON");
    dlg_run->add_option("--max-turns", max_turns, "Override the turn cap");
    dlg_run->add_option("--context-k", context_k, "Keep only the last k history entries");
    dlg_run->add_option("--ngram", ngram, "n for repetition and mirroring")->check(CLI::PositiveNumber);

    auto* dlg_analyze = dialogue->add_subcommand("analyze", "Fidelity analysis of a transcript");
    std::string transcript_path;
    dlg_analyze->add_option("--transcript", transcript_path, "Transcript JSON lines")->required();
    dlg_analyze->add_option("--personas", persona_path, "Persona library JSON");
    dlg_analyze->add_option("--ngram", ngram, "n for repetition and mirroring")->check(CLI::PositiveNumber);

    // report
    auto* report = app.add_subcommand("report", "Render reports from persisted results");
    report->require_subcommand(1);
    auto* radar = report->add_subcommand("radar", "Radar SVG from a matrix");
    auto* matrix = report->add_subcommand("matrix", "Matrix CSV from a run");
    std::string matrix_path, run_dir;
    for (auto* sub : {radar, matrix}) {
        sub->add_option("--matrix", matrix_path, "Matrix CSV");
        sub->add_option("--from", run_dir, "Run directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfigError;
    }

    try {
        if (ocean_run->parsed()) {
            RunConfig cfg = base_config(g);
            apply_backend_flags(g, cfg.backend, default_data_dir() / "fixtures" / "ocean_published.jsonl");
            if (!conditions.empty()) {
                cfg.conditions.clear();
                for (char c : conditions)
                    cfg.conditions.push_back(trait_from_string(std::string(1, c)));
            }
            if (!policy_name.empty())
                cfg.policy.mode = mode_from_string(policy_name);
            if (!inventory_path.empty())
                cfg.inventory_path = inventory_path;
            if (batch_set)
                cfg.batching = batch_size == 0 ? Batching::whole_survey() : Batching::chunked(batch_size);
            if (cfg.out_dir.empty())
                cfg.out_dir = "runs/ocean";
            const auto run = run_ocean_experiment(cfg);
            print_summary(run);
            return run.exit_code;
        }
        if (ocean_score->parsed()) {
            const fs::path out = g.out;
            if (!from_dir.empty()) {
                std::optional<ParsePolicy> p;
                if (!score_policy.empty())
                    p = ParsePolicy{mode_from_string(score_policy), 1, 5};
                const auto run = rescore(from_dir, p, out);
                print_summary(run);
                return run.exit_code;
            }
            if (ratings_file.empty())
                throw ConfigError("ocean score needs --from DIR or --ratings FILE");
            const auto run = score_sheets(read_file(ratings_file), builtin_ipip50(), out);
            print_summary(run);
            return run.exit_code;
        }
        if (dlg_run->parsed()) {
            const RunConfig base = base_config(g);
            DialogueRunConfig cfg;
            cfg.backend = base.backend;
            cfg.seed = base.seed;
            cfg.ngram = ngram;
            const auto lib = personas(persona_path);
            fs::path dfile = dlg_file;
            if (dfile.empty()) {
                if (dlg_id.empty())
                    throw ConfigError("dialogue run needs --dialogue FILE or --id NAME");
                dfile = default_data_dir() / "dialogues" / (dlg_id + ".json");
            }
            DialogueConfig dcfg = load_dialogue_config(read_file(dfile), lib);
            if (max_turns > 0)
                dcfg.max_turns = max_turns;
            if (context_k > 0)
                dcfg.context_policy = ContextPolicy::last_k(context_k);
            apply_backend_flags(g, cfg.backend,
                                default_data_dir() / "fixtures" / ("dialogue_" + dfile.stem().string() + ".jsonl"));
            cfg.out_dir = base.out_dir.empty() ? fs::path("runs") / ("dialogue_" + dfile.stem().string()) : base.out_dir;
            cfg.backend.validate();
            auto backend = make_backend(cfg.backend);
            const auto run = run_dialogue_experiment(cfg, dcfg, lib, *backend);
            const auto& d = *run.dialogue;
            std::cout << "turns: " << d.transcript.turns.size() << " ("
                      << end_reason_name(d.transcript.ended_by) << ")\n"
                      << "drift events: " << d.fidelity.drift_events.size() << '\n'
                      << "mean mirroring: " << d.fidelity.mean_mirroring << '\n'
                      << "artifacts: " << run.out_dir.string() << '\n';
            if (!d.transcript.error.empty())
                std::cerr << "error: " << d.transcript.error << '\n';
            return run.exit_code;
        }
        if (dlg_analyze->parsed()) {
            const auto lib = personas(persona_path);
            const auto t = load_transcript(transcript_path);
            const auto run = analyze_dialogue(t, lib, g.seed.value_or(0), ngram, g.out);
            std::cout << serialize_fidelity(run.dialogue->fidelity);
            return kExitOk;
        }
        if (radar->parsed() || matrix->parsed()) {
            std::string csv;
            if (!matrix_path.empty())
                csv = read_file(matrix_path);
            else if (!run_dir.empty())
                csv = read_file(fs::path(run_dir) / "matrix.csv");
            else
                throw ConfigError("report needs --matrix FILE or --from DIR");
            const AlignmentMatrix m = parse_matrix_csv(csv);
            if (matrix->parsed()) {
                write_or_print(g.out, matrix_csv(m));
            } else {
                write_or_print(g.out, radar_svg(radar_from_metrics(steerability_metrics(m))));
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const TransportError& e) {
        std::cerr << "backend unreachable: " << e.what() << '\n';
        return kExitBackendUnreachable;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitPartialFailure;
    }
    return kExitOk;
}
