#include "steer/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifndef STEER_DEFAULT_DATA_DIR
#define STEER_DEFAULT_DATA_DIR "data"
#endif

namespace steer {

namespace fs = std::filesystem;
using nlohmann::json;

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("STEER_DATA_DIR"); env && *env)
        return env;
    return STEER_DEFAULT_DATA_DIR;
}

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << content;
    if (!out.flush())
        throw std::runtime_error("write failed for " + p.string());
}

std::string describe_policy(const ParsePolicy& p) {
    return std::string(mode_name(p.mode)) + " [" + std::to_string(p.scale_min) + "," +
           std::to_string(p.scale_max) + "]";
}

std::string describe_batching(const Batching& b) {
    return b.is_whole() ? "whole_survey" : "chunked(" + std::to_string(b.chunk_size) + ")";
}

std::string optional_text(const std::optional<double>& v) {
    if (!v)
        return "unset";
    std::ostringstream os;
    os << *v;
    return os.str();
}

std::string optional_text(const std::optional<int>& v) { return v ? std::to_string(*v) : "unset"; }

// ---- manifest -----------------------------------------------------------

json manifest_json(const RunManifest& m) {
    std::vector<std::string> conds;
    for (Trait t : m.conditions)
        conds.emplace_back(1, trait_letter(t));
    json j = {{"kind", m.kind},
              {"tool_version", m.tool_version},
              {"backend", {{"identity", m.backend_identity}, {"kind", m.backend_kind}}},
              {"model", m.model},
              {"temperature", m.temperature},
              {"max_tokens", m.max_tokens},
              {"seed", m.seed},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at}};
    if (m.kind == "ocean") {
        j["inventory"] = m.inventory_source;
        j["parse_policy"] = m.parse_policy;
        j["batching"] = m.batching;
        j["conditions"] = conds;
    }
    if (!m.rescored_from.empty())
        j["rescored_from"] = m.rescored_from;
    if (!m.previous_parse_policy.empty())
        j["previous_parse_policy"] = m.previous_parse_policy;
    return j;
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.kind = j.at("kind").get<std::string>();
    m.tool_version = j.value("tool_version", std::string());
    if (j.contains("backend")) {
        m.backend_identity = j["backend"].value("identity", std::string());
        m.backend_kind = j["backend"].value("kind", std::string());
    }
    m.model = j.value("model", std::string());
    m.temperature = j.value("temperature", std::string("unset"));
    m.max_tokens = j.value("max_tokens", std::string("unset"));
    m.seed = j.value("seed", std::uint64_t{0});
    m.started_at = j.value("started_at", std::string());
    m.finished_at = j.value("finished_at", std::string());
    m.inventory_source = j.value("inventory", std::string("builtin"));
    m.parse_policy = j.value("parse_policy", std::string("strict [1,5]"));
    m.batching = j.value("batching", std::string("whole_survey"));
    for (const auto& c : j.value("conditions", std::vector<std::string>{}))
        m.conditions.push_back(trait_from_string(c));
    m.rescored_from = j.value("rescored_from", std::string());
    m.previous_parse_policy = j.value("previous_parse_policy", std::string());
    return m;
}

ParsePolicy policy_from_description(const std::string& s) {
    // "<mode> [lo,hi]"
    const auto sp = s.find(' ');
    ParsePolicy p;
    p.mode = mode_from_string(s.substr(0, sp));
    if (sp != std::string::npos) {
        int lo = 1, hi = 5;
        if (std::sscanf(s.c_str() + sp, " [%d,%d]", &lo, &hi) == 2) {
            p.scale_min = lo;
            p.scale_max = hi;
        }
    }
    return p;
}

Batching batching_from_description(const std::string& s) {
    if (s == "whole_survey")
        return Batching::whole_survey();
    std::size_t k = 0;
    if (std::sscanf(s.c_str(), "chunked(%zu)", &k) == 1)
        return Batching::chunked(k);
    throw std::runtime_error("unrecognised batching '" + s + "' in manifest");
}

// ---- derived artifacts -------------------------------------------------

struct OceanInputs {
    const Inventory* inv = nullptr;
    ParsePolicy policy;
    Batching batching;
    std::optional<SentimentLexicon> lexicon;
};

std::optional<SentimentLexicon> load_lexicon_or_default(const fs::path& configured) {
    if (!configured.empty())
        return load_lexicon(configured);
    const fs::path shipped = default_data_dir() / "lexicon" / "sentiment.tsv";
    std::error_code ec;
    if (fs::exists(shipped, ec))
        return load_lexicon(shipped);
    return std::nullopt;
}

std::vector<int> batch_ids(const Inventory& inv, const Batching& b, std::size_t batch) {
    const std::size_t step = b.is_whole() ? inv.items.size() : b.chunk_size;
    std::vector<int> ids;
    for (std::size_t i = batch * step; i < std::min(inv.items.size(), (batch + 1) * step); ++i)
        ids.push_back(inv.items[i].id);
    return ids;
}

// Parse, score and measure every condition from the raw map.
void derive_ocean(RunArtifacts& run, const OceanInputs& in) {
    const Inventory& inv = *in.inv;
    const std::string questionnaire = render_questionnaire(inv);
    for (auto& c : run.conditions) {
        c.sheet.reset();
        c.scores.reset();
        c.parse_failure.reset();
        c.text = {};
        std::string all_raw;
        bool complete = c.request_tags.size() == in.batching.batch_count(inv.items.size());
        for (const auto& tag : c.request_tags) {
            const auto it = run.raw.find(tag);
            if (it == run.raw.end()) {
                complete = false;
                continue;
            }
            if (!all_raw.empty())
                all_raw += '\n';
            all_raw += it->second;
        }
        if (!all_raw.empty()) {
            try {
                c.text.stats = text_stats(all_raw);
            } catch (const EmptyText&) {
            }
            if (in.lexicon)
                c.text.sentiment = sentiment_polarity(all_raw, *in.lexicon);
            c.text.relevance = contextual_relevance(questionnaire, all_raw);
        }
        if (!complete || !c.backend_error.empty())
            continue;

        std::vector<Rating> ratings;
        for (std::size_t b = 0; b < c.request_tags.size(); ++b) {
            const auto& tag = c.request_tags[b];
            try {
                auto part = extract_ratings(run.raw.at(tag), batch_ids(inv, in.batching, b), in.policy);
                ratings.insert(ratings.end(), part.begin(), part.end());
            } catch (const ParseError& e) {
                ParseFailure f;
                f.request_tag = tag;
                f.code = e.code;
                f.message = e.what();
                f.found = e.found;
                f.expected = e.expected;
                f.token = e.token;
                f.position = e.position;
                c.parse_failure = f;
                break;
            }
        }
        if (c.parse_failure)
            continue;
        c.sheet = RatingSheet::from_ratings(c.condition, ratings);
        c.scores = score_traits(*c.sheet, inv);
    }

    run.matrix.reset();
    run.metrics.reset();
    std::vector<RatingSheet> sheets;
    for (const auto& c : run.conditions)
        if (c.sheet)
            sheets.push_back(*c.sheet);
    bool all_five = sheets.size() == 5;
    if (all_five) {
        run.matrix = build_alignment_matrix(sheets, inv);
        run.metrics = steerability_metrics(*run.matrix, inv);
    }

    run.exit_code = kExitOk;
    bool any_failed = false;
    bool all_transport = true;
    for (const auto& c : run.conditions) {
        if (c.ok())
            continue;
        any_failed = true;
        all_transport = all_transport && c.transport_failure;
    }
    if (any_failed)
        run.exit_code = all_transport ? kExitBackendUnreachable : kExitPartialFailure;
    run.report = run_report(run);
}

json sheets_json(const RunArtifacts& run) {
    json arr = json::array();
    for (const auto& c : run.conditions) {
        json j = {{"condition", std::string(1, trait_letter(c.condition))},
                  {"request_tags", c.request_tags},
                  {"status", c.ok() ? "ok" : "failed"}};
        if (c.sheet) {
            json r = json::object();
            for (const auto& [id, v] : c.sheet->ratings)
                r[std::to_string(id)] = v;
            j["ratings"] = r;
        }
        if (c.scores) {
            json s = json::object();
            for (Trait t : kAllTraits)
                s[std::string(1, trait_letter(t))] = (*c.scores)[index(t)];
            j["scores"] = s;
        }
        if (c.parse_failure) {
            const auto& f = *c.parse_failure;
            j["parse_error"] = {{"request_tag", f.request_tag}, {"code", code_name(f.code)},
                                {"message", f.message},         {"found", f.found},
                                {"expected", f.expected},       {"token", f.token},
                                {"position", f.position}};
        }
        if (!c.backend_error.empty())
            j["backend_error"] = c.backend_error;
        arr.push_back(j);
    }
    return {{"sheets", arr}};
}

json metrics_json(const RunArtifacts& run) {
    json j = json::object();
    if (run.metrics) {
        const auto& m = *run.metrics;
        json delta = json::object();
        json norm = json::object();
        json bounds = json::object();
        for (Trait t : kAllTraits) {
            const std::string l(1, trait_letter(t));
            delta[l] = m.delta[index(t)];
            json row = json::object();
            for (Trait s : kAllTraits)
                row[std::string(1, trait_letter(s))] = m.normalized[index(t)][index(s)];
            norm[l] = row;
            bounds[l] = {m.bounds[index(t)].min, m.bounds[index(t)].max};
        }
        j["steerability"] = {{"delta", delta},
                             {"hits_inclusive", m.hits_inclusive},
                             {"hits_strict", m.hits_strict},
                             {"argmax_hit_rate_inclusive", m.argmax_hits_inclusive},
                             {"argmax_hit_rate_strict", m.argmax_hits_strict},
                             {"normalized", norm},
                             {"bounds", bounds}};
    }
    json text = json::object();
    for (const auto& c : run.conditions) {
        json t = {{"relevance_embedding_cosine", c.text.relevance}};
        if (c.text.stats)
            t["stats"] = {{"words", c.text.stats->words},
                          {"sentences", c.text.stats->sentences},
                          {"syllables", c.text.stats->syllables},
                          {"characters", c.text.stats->characters},
                          {"fk_grade", c.text.stats->fk_grade}};
        if (c.text.sentiment)
            t["sentiment"] = {{"score", c.text.sentiment->score},
                              {"positive", c.text.sentiment->positive_count},
                              {"negative", c.text.sentiment->negative_count}};
        text[std::string(1, trait_letter(c.condition))] = t;
    }
    j["text_metrics"] = text;
    return j;
}

void write_derived(const RunArtifacts& run, const fs::path& dir) {
    write_file(dir / "sheets.json", sheets_json(run).dump(2) + "\n");
    std::vector<std::pair<Trait, TraitScores>> rows;
    for (const auto& c : run.conditions)
        if (c.scores)
            rows.emplace_back(c.condition, *c.scores);
    write_file(dir / "matrix.csv", run.matrix ? matrix_csv(*run.matrix) : scores_csv(rows));
    write_file(dir / "metrics.json", metrics_json(run).dump(2) + "\n");
    if (run.metrics)
        write_file(dir / "radar.svg", radar_svg(radar_from_metrics(*run.metrics)));
    write_file(dir / "report.md", run.report);
    write_file(dir / "manifest.json", manifest_json(run.manifest).dump(2) + "\n");
}

void prepare_dir(const fs::path& dir) {
    if (dir.empty())
        throw ConfigError("output directory is not set");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw ConfigError("cannot create output directory " + dir.string());
}

} // namespace

std::string raw_file_name(std::string_view tag) {
    std::string s(tag);
    for (auto& c : s)
        if (c == '/' || c == '\\' || c == ':')
            c = '_';
    return s + ".txt";
}

std::string ocean_request_tag(Trait t, std::size_t batch, std::size_t batch_count) {
    std::string tag = std::string("ocean/") + trait_letter(t);
    if (batch_count > 1)
        tag += "/batch" + std::to_string(batch);
    return tag;
}

void RunConfig::validate_run() const {
    if (conditions.empty())
        throw ConfigError("at least one condition is required");
    for (std::size_t i = 0; i < conditions.size(); ++i)
        for (std::size_t j = i + 1; j < conditions.size(); ++j)
            if (conditions[i] == conditions[j])
                throw ConfigError(std::string("condition ") + trait_letter(conditions[i]) +
                                  " is listed twice");
    if (policy.scale_min >= policy.scale_max)
        throw ConfigError("parse policy scale_min must be below scale_max");
    if (out_dir.empty())
        throw ConfigError("output directory is not set");
}

void RunConfig::validate() const {
    validate_run();
    backend.validate();
}

RunConfig load_run_config(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("run config parse error: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("run config must be a JSON object");
    static const std::set<std::string> known = {"backend", "inventory",  "conditions", "parse_policy",
                                                "batch_size", "out_dir", "seed",       "lexicon"};
    for (const auto& [k, v] : doc.items())
        if (!known.count(k))
            throw ConfigError("unknown run config key '" + k + "'");
    RunConfig cfg;
    try {
        if (doc.contains("backend"))
            cfg.backend = load_backend_config(doc["backend"].dump());
        if (doc.contains("inventory")) {
            const auto inv = doc["inventory"].get<std::string>();
            if (inv != "builtin")
                cfg.inventory_path = inv;
        }
        if (doc.contains("conditions")) {
            cfg.conditions.clear();
            for (const auto& c : doc["conditions"])
                cfg.conditions.push_back(trait_from_string(c.get<std::string>()));
        }
        if (doc.contains("parse_policy"))
            cfg.policy.mode = mode_from_string(doc["parse_policy"].get<std::string>());
        if (doc.contains("batch_size")) {
            const auto k = doc["batch_size"].get<std::size_t>();
            cfg.batching = k == 0 ? Batching::whole_survey() : Batching::chunked(k);
        }
        if (doc.contains("out_dir"))
            cfg.out_dir = doc["out_dir"].get<std::string>();
        if (doc.contains("seed"))
            cfg.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("lexicon"))
            cfg.lexicon_path = doc["lexicon"].get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config_file(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    RunConfig cfg = load_run_config(text);
    // Relative fixture paths are resolved against the config file.
    if (!cfg.backend.fixture.empty() && cfg.backend.fixture.is_relative())
        cfg.backend.fixture = path.parent_path() / cfg.backend.fixture;
    return cfg;
}

RunArtifacts run_ocean_experiment(const RunConfig& cfg, HarnessOptions opts) {
    auto backend = make_backend(cfg.backend);
    return run_ocean_experiment(cfg, *backend, std::move(opts));
}

RunArtifacts run_ocean_experiment(const RunConfig& cfg, Backend& backend, HarnessOptions opts) {
    cfg.validate_run();
    if (!opts.clock)
        opts.clock = utc_now;
    prepare_dir(cfg.out_dir);
    const fs::path raw_dir = cfg.out_dir / "raw";
    fs::create_directories(raw_dir);

    Inventory loaded;
    const Inventory* inv = &builtin_ipip50();
    RunArtifacts run;
    run.out_dir = cfg.out_dir;
    run.manifest.inventory_source = "builtin";
    if (!cfg.inventory_path.empty()) {
        try {
            loaded = load_inventory(read_file(cfg.inventory_path));
        } catch (const std::exception& e) {
            throw ConfigError("inventory " + cfg.inventory_path.string() + ": " + e.what());
        }
        inv = &loaded;
        run.manifest.inventory_source = "file:" + cfg.inventory_path.string();
        write_file(cfg.out_dir / "inventory.json", serialize_inventory(loaded));
    }

    auto& mf = run.manifest;
    mf.kind = "ocean";
    mf.tool_version = kToolVersion;
    mf.backend_identity = backend.identity();
    mf.backend_kind = std::string(backend_kind_name(cfg.backend.kind));
    mf.model = cfg.backend.model;
    mf.temperature = optional_text(cfg.backend.temperature);
    mf.max_tokens = optional_text(cfg.backend.max_tokens);
    mf.parse_policy = describe_policy(cfg.policy);
    mf.batching = describe_batching(cfg.batching);
    mf.seed = cfg.seed;
    mf.started_at = opts.clock();

    // Canonical order regardless of the order conditions were configured in.
    std::vector<Trait> order;
    for (Trait t : kAllTraits)
        if (std::find(cfg.conditions.begin(), cfg.conditions.end(), t) != cfg.conditions.end())
            order.push_back(t);
    mf.conditions = order;
    run.conditions.resize(order.size());

    const std::size_t batches = cfg.batching.batch_count(inv->items.size());
    std::mutex mu;
    json raw_index = json::object();
    auto run_condition = [&](std::size_t ci) {
        ConditionResult& c = run.conditions[ci];
        c.condition = order[ci];
        const MessageList survey = build_survey_messages(trait_prompt(c.condition), *inv, cfg.batching);
        for (std::size_t b = 0; b < batches; ++b) {
            CompletionRequest req;
            req.model = cfg.backend.model;
            req.temperature = cfg.backend.temperature;
            req.max_tokens = cfg.backend.max_tokens;
            req.request_tag = ocean_request_tag(c.condition, b, batches);
            req.messages = {survey[0], survey[b + 1]};
            if (cfg.backend.style == PromptStyle::Completion)
                req.messages = flatten_for_completion(req.messages);
            c.request_tags.push_back(req.request_tag);
            try {
                const auto result = backend.complete(req);
                const std::string file = raw_file_name(req.request_tag);
                write_file(raw_dir / file, result.text);
                std::lock_guard lock(mu);
                run.raw[req.request_tag] = result.text;
                raw_index[req.request_tag] = {{"file", "raw/" + file},
                                              {"condition", std::string(1, trait_letter(c.condition))},
                                              {"batch", b},
                                              {"finish_reason", finish_reason_name(result.finish_reason)}};
            } catch (const BackendError& e) {
                c.backend_error = e.what();
                c.transport_failure = dynamic_cast<const TransportError*>(&e) != nullptr;
                break;
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(backend.max_parallel(), order.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < order.size(); ++i)
            run_condition(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < order.size(); i = next++)
                    run_condition(i);
            });
        for (auto& th : pool)
            th.join();
    }
    write_file(cfg.out_dir / "raw_index.json", raw_index.dump(2) + "\n");

    OceanInputs in{inv, cfg.policy, cfg.batching, load_lexicon_or_default(cfg.lexicon_path)};
    derive_ocean(run, in);
    mf.finished_at = opts.clock();
    write_derived(run, cfg.out_dir);
    return run;
}

RunArtifacts rescore(const fs::path& run_dir, std::optional<ParsePolicy> policy, const fs::path& out_dir,
                     HarnessOptions opts) {
    if (!opts.clock)
        opts.clock = utc_now;
    const fs::path manifest_path = run_dir / "manifest.json";
    const fs::path index_path = run_dir / "raw_index.json";
    std::error_code ec;
    if (!fs::exists(manifest_path, ec) || !fs::exists(index_path, ec))
        throw std::runtime_error("no persisted raw responses in " + run_dir.string());

    RunArtifacts run;
    run.manifest = manifest_from_json(json::parse(read_file(manifest_path)));
    if (run.manifest.kind != "ocean")
        throw std::runtime_error(run_dir.string() + " is not an ocean run");
    const json index = json::parse(read_file(index_path));

    Inventory loaded;
    const Inventory* inv = &builtin_ipip50();
    if (run.manifest.inventory_source != "builtin") {
        loaded = load_inventory(read_file(run_dir / "inventory.json"));
        inv = &loaded;
    }

    const ParsePolicy original = policy_from_description(run.manifest.parse_policy);
    const ParsePolicy used = policy.value_or(original);
    const Batching batching = batching_from_description(run.manifest.batching);
    const std::size_t batches = batching.batch_count(inv->items.size());

    for (Trait t : run.manifest.conditions) {
        ConditionResult c;
        c.condition = t;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::string tag = ocean_request_tag(t, b, batches);
            c.request_tags.push_back(tag);
            if (!index.contains(tag)) {
                c.backend_error = "no raw response was persisted for " + tag;
                break;
            }
            run.raw[tag] = read_file(run_dir / index[tag].at("file").get<std::string>());
        }
        run.conditions.push_back(std::move(c));
    }

    run.out_dir = out_dir.empty() ? run_dir : out_dir;
    const bool same_dir = out_dir.empty() || fs::equivalent(out_dir, run_dir, ec);
    run.manifest.rescored_from = same_dir ? std::string(".") : run_dir.string();
    if (!(used == original)) {
        run.manifest.previous_parse_policy = run.manifest.parse_policy;
        run.manifest.parse_policy = describe_policy(used);
    }
    if (!same_dir) {
        prepare_dir(run.out_dir);
        fs::create_directories(run.out_dir / "raw");
        for (const auto& [tag, text] : run.raw)
            write_file(run.out_dir / "raw" / raw_file_name(tag), text);
        write_file(run.out_dir / "raw_index.json", index.dump(2) + "\n");
        if (inv != &builtin_ipip50())
            write_file(run.out_dir / "inventory.json", serialize_inventory(*inv));
    }

    OceanInputs in{inv, used, batching, load_lexicon_or_default({})};
    derive_ocean(run, in);
    run.manifest.finished_at = opts.clock();
    write_derived(run, run.out_dir);
    return run;
}

RunArtifacts score_sheets(std::string_view sheets_json_text, const Inventory& inv, const fs::path& out_dir,
                          HarnessOptions opts) {
    if (!opts.clock)
        opts.clock = utc_now;
    json doc;
    try {
        doc = json::parse(sheets_json_text.begin(), sheets_json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("ratings file parse error: ") + e.what());
    }
    RunArtifacts run;
    run.out_dir = out_dir;
    run.manifest.kind = "ocean";
    run.manifest.tool_version = kToolVersion;
    run.manifest.backend_identity = "none (ratings file)";
    run.manifest.inventory_source = "builtin";
    run.manifest.parse_policy = "not applicable";
    run.manifest.batching = "not applicable";
    run.manifest.temperature = "unset";
    run.manifest.max_tokens = "unset";
    run.manifest.started_at = opts.clock();

    std::map<Trait, RatingSheet> by_trait;
    try {
        for (const auto& s : doc.at("sheets")) {
            if (!s.contains("ratings"))
                continue;
            RatingSheet sheet;
            sheet.condition = trait_from_string(s.at("condition").get<std::string>());
            for (const auto& [k, v] : s.at("ratings").items())
                sheet.ratings[std::stoi(k)] = v.get<int>();
            if (by_trait.count(sheet.condition))
                throw ScoreError(ScoreError::Code::DuplicateCondition,
                                 std::string("condition ") + trait_letter(sheet.condition) +
                                     " appears twice");
            by_trait.emplace(sheet.condition, std::move(sheet));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ratings file: ") + e.what());
    }
    for (auto& [t, sheet] : by_trait) {
        run.manifest.conditions.push_back(t);
        ConditionResult c;
        c.condition = t;
        c.sheet = sheet;
        c.scores = score_traits(sheet, inv);
        run.conditions.push_back(std::move(c));
    }
    if (run.conditions.size() == 5) {
        std::vector<RatingSheet> sheets;
        for (const auto& c : run.conditions)
            sheets.push_back(*c.sheet);
        run.matrix = build_alignment_matrix(sheets, inv);
        run.metrics = steerability_metrics(*run.matrix, inv);
    }
    run.report = run_report(run);
    run.manifest.finished_at = opts.clock();
    if (!out_dir.empty()) {
        prepare_dir(out_dir);
        write_derived(run, out_dir);
    }
    return run;
}

// ---- dialogue -------------------------------------------------------------

namespace {

// Records the type of the last backend failure so the exit code can tell an
// unreachable backend from other errors.
class FailureRecorder : public Backend {
public:
    explicit FailureRecorder(Backend& inner) : inner_(inner) {}
    CompletionResult complete(const CompletionRequest& req) override {
        try {
            return inner_.complete(req);
        } catch (const TransportError&) {
            transport_ = true;
            throw;
        } catch (...) {
            transport_ = false;
            throw;
        }
    }
    std::string identity() const override { return inner_.identity(); }
    bool deterministic() const override { return inner_.deterministic(); }
    std::size_t max_parallel() const override { return inner_.max_parallel(); }
    bool last_failure_was_transport() const { return transport_; }

private:
    Backend& inner_;
    bool transport_ = false;
};

json retries_json(const Transcript& t) {
    json arr = json::array();
    for (const auto& r : t.context_retries)
        arr.push_back({{"turn_index", r.turn_index},
                       {"history_entries", r.history_entries},
                       {"k", r.k},
                       {"succeeded", r.succeeded}});
    return arr;
}

} // namespace

RunArtifacts run_dialogue_experiment(const DialogueRunConfig& cfg, DialogueConfig dialogue,
                                     const PersonaLibrary& lib, Backend& backend, HarnessOptions opts) {
    if (!opts.clock)
        opts.clock = utc_now;
    prepare_dir(cfg.out_dir);
    if (dialogue.model.empty())
        dialogue.model = cfg.backend.model;
    if (!dialogue.temperature)
        dialogue.temperature = cfg.backend.temperature;
    if (!dialogue.max_tokens)
        dialogue.max_tokens = cfg.backend.max_tokens;
    dialogue.style = cfg.backend.style;
    dialogue.validate();

    RunArtifacts run;
    run.out_dir = cfg.out_dir;
    auto& mf = run.manifest;
    mf.kind = "dialogue";
    mf.tool_version = kToolVersion;
    mf.backend_identity = backend.identity();
    mf.backend_kind = std::string(backend_kind_name(cfg.backend.kind));
    mf.model = dialogue.model;
    mf.temperature = optional_text(dialogue.temperature);
    mf.max_tokens = optional_text(dialogue.max_tokens);
    mf.seed = cfg.seed;
    mf.started_at = opts.clock();

    FailureRecorder recorder(backend);
    Transcript t;
    {
        TranscriptWriter writer(cfg.out_dir / "transcript.jsonl");
        DialogueOptions dopts;
        dopts.observer = &writer;
        t = run_dialogue(dialogue, recorder, dopts);
    }
    DialogueResult d{t, analyze_transcript(t, lib, cfg.ngram, cfg.seed)};
    run.dialogue = d;
    if (t.ended_by == EndReason::BackendError)
        run.exit_code = recorder.last_failure_was_transport() ? kExitBackendUnreachable : kExitPartialFailure;
    run.report = run_report(run);
    mf.finished_at = opts.clock();

    json manifest = manifest_json(mf);
    manifest["dialogue"] = {{"id", t.id},
                            {"persona_a", t.persona_a},
                            {"persona_b", t.persona_b},
                            {"max_turns", t.max_turns},
                            {"context_policy", describe(t.context_policy)},
                            {"ended_by", end_reason_name(t.ended_by)},
                            {"context_retries", retries_json(t)}};
    write_file(cfg.out_dir / "fidelity.json", serialize_fidelity(d.fidelity));
    write_file(cfg.out_dir / "report.md", run.report);
    write_file(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
    return run;
}

RunArtifacts analyze_dialogue(const Transcript& t, const PersonaLibrary& lib, std::uint64_t seed,
                              std::size_t ngram, const fs::path& out_dir) {
    RunArtifacts run;
    run.manifest.kind = "dialogue";
    run.manifest.tool_version = kToolVersion;
    run.manifest.backend_identity = "none (persisted transcript)";
    run.manifest.seed = seed;
    run.dialogue = DialogueResult{t, analyze_transcript(t, lib, ngram, seed)};
    run.report = run_report(run);
    run.out_dir = out_dir;
    if (!out_dir.empty()) {
        prepare_dir(out_dir);
        write_file(out_dir / "fidelity.json", serialize_fidelity(run.dialogue->fidelity));
        write_file(out_dir / "report.md", run.report);
    }
    return run;
}

} // namespace steer
