#include "steer/dialogue.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <random>
#include <regex>
#include <set>
#include <sstream>

namespace steer {

using nlohmann::json;

ContextPolicy ContextPolicy::last_k(std::size_t k) {
    if (k == 0)
        throw std::invalid_argument("context window k must be at least 1");
    return {Kind::LastK, k};
}

std::string describe(const ContextPolicy& p) {
    return p.kind == ContextPolicy::Kind::FullHistory ? "full_history"
                                                      : "last_k(" + std::to_string(p.k) + ")";
}

void DialogueConfig::validate() const {
    if (max_turns < 2)
        throw std::invalid_argument("max_turns must be at least 2");
    if (icebreaker.empty())
        throw std::invalid_argument("icebreaker is empty");
    if (id.empty())
        throw std::invalid_argument("dialogue id is empty");
    if (persona_a.id == persona_b.id)
        throw std::invalid_argument("a dialogue needs two distinct personas");
}

namespace {

json policy_to_json(const ContextPolicy& p) {
    if (p.kind == ContextPolicy::Kind::FullHistory)
        return {{"kind", "full_history"}};
    return {{"kind", "last_k"}, {"k", p.k}};
}

ContextPolicy policy_from_json(const json& j) {
    const auto kind = j.value("kind", std::string("full_history"));
    if (kind == "full_history")
        return ContextPolicy::full_history();
    if (kind == "last_k")
        return ContextPolicy::last_k(j.at("k").get<std::size_t>());
    throw std::invalid_argument("unknown context policy '" + kind + "'");
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

DialogueConfig load_dialogue_config(std::string_view document, const PersonaLibrary& lib) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("dialogue config parse error: ") + e.what());
    }
    DialogueConfig cfg;
    try {
        cfg.id = doc.at("id").get<std::string>();
        cfg.persona_a = lib.at(doc.at("persona_a").get<std::string>());
        cfg.persona_b = lib.at(doc.at("persona_b").get<std::string>());
        cfg.icebreaker = doc.at("icebreaker").get<std::string>();
        cfg.max_turns = doc.value("max_turns", 50);
        if (doc.contains("context_policy"))
            cfg.context_policy = policy_from_json(doc["context_policy"]);
        cfg.model = doc.value("model", std::string());
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("dialogue config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string_view end_reason_name(EndReason r) {
    switch (r) {
    case EndReason::TurnCap: return "turn_cap";
    case EndReason::BackendError: return "backend_error";
    case EndReason::Stop: return "stop";
    case EndReason::Incomplete: return "incomplete";
    }
    return "incomplete";
}

EndReason end_reason_from_string(std::string_view s) {
    if (s == "turn_cap") return EndReason::TurnCap;
    if (s == "backend_error") return EndReason::BackendError;
    if (s == "stop") return EndReason::Stop;
    if (s == "incomplete") return EndReason::Incomplete;
    throw std::invalid_argument("unknown end reason '" + std::string(s) + "'");
}

std::string clean_turn_text(std::string_view raw) {
    std::string stripped;
    stripped.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '<') {
            const auto close = raw.find('>', i);
            const bool tag = close != std::string_view::npos && close > i + 1 &&
                             (std::isalpha(static_cast<unsigned char>(raw[i + 1])) || raw[i + 1] == '/');
            if (tag) {
                stripped += ' ';
                i = close;
                continue;
            }
        }
        stripped += raw[i];
    }
    static const std::vector<std::pair<std::string, std::string>> entities = {
        {"&nbsp;", " "}, {"&quot;", "\""}, {"&#39;", "'"}, {"&apos;", "'"},
        {"&lt;", "<"},   {"&gt;", ">"},    {"&amp;", "&"}};
    for (const auto& [from, to] : entities) {
        std::size_t pos = 0;
        while ((pos = stripped.find(from, pos)) != std::string::npos) {
            stripped.replace(pos, from.size(), to);
            pos += to.size();
        }
    }
    std::string out;
    bool space = false;
    for (char c : stripped) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space)
            out += ' ';
        space = false;
        out += c;
    }
    return out;
}

// ---- persistence ------------------------------------------------------------

namespace {

json header_json(const Transcript& t) {
    return {{"type", "header"},        {"id", t.id},
            {"persona_a", t.persona_a}, {"persona_b", t.persona_b},
            {"icebreaker", t.icebreaker}, {"max_turns", t.max_turns},
            {"context_policy", policy_to_json(t.context_policy)}};
}

json turn_json(const Turn& turn) {
    json j = {{"type", "turn"},       {"index", turn.index},
              {"speaker", turn.speaker}, {"raw", turn.text},
              {"cleaned", turn.cleaned}, {"request_tag", turn.request_tag}};
    if (!turn.timestamp.empty())
        j["timestamp"] = turn.timestamp;
    return j;
}

json retry_json(const ContextRetry& r) {
    return {{"type", "context_retry"}, {"turn_index", r.turn_index},
            {"history_entries", r.history_entries}, {"k", r.k}, {"succeeded", r.succeeded}};
}

json end_json(const Transcript& t) {
    json j = {{"type", "end"}, {"ended_by", end_reason_name(t.ended_by)}, {"turns", t.turns.size()}};
    if (!t.error.empty())
        j["error"] = t.error;
    return j;
}

} // namespace

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path) : file_(path, std::ios::binary) {
    if (!file_)
        throw std::runtime_error("cannot write transcript " + path.string());
    out_ = &file_;
}

void TranscriptWriter::write(const std::string& line) {
    *out_ << line << '\n';
    out_->flush();
}

void TranscriptWriter::on_start(const Transcript& t) { write(header_json(t).dump()); }
void TranscriptWriter::on_turn(const Turn& turn) { write(turn_json(turn).dump()); }
void TranscriptWriter::on_context_retry(const ContextRetry& r) { write(retry_json(r).dump()); }
void TranscriptWriter::on_end(const Transcript& t) { write(end_json(t).dump()); }

std::string serialize_transcript(const Transcript& t) {
    std::ostringstream os;
    TranscriptWriter w(os);
    w.on_start(t);
    // Retries are emitted just before the turn they produced.
    std::size_t r = 0;
    for (const auto& turn : t.turns) {
        while (r < t.context_retries.size() && t.context_retries[r].turn_index <= turn.index)
            w.on_context_retry(t.context_retries[r++]);
        w.on_turn(turn);
    }
    while (r < t.context_retries.size())
        w.on_context_retry(t.context_retries[r++]);
    if (t.ended_by != EndReason::Incomplete)
        w.on_end(t);
    return os.str();
}

Transcript parse_transcript(std::string_view content) {
    Transcript t;
    std::istringstream in{std::string(content)};
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const json j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "header") {
                t.id = j.at("id").get<std::string>();
                t.persona_a = j.at("persona_a").get<std::string>();
                t.persona_b = j.at("persona_b").get<std::string>();
                t.icebreaker = j.at("icebreaker").get<std::string>();
                t.max_turns = j.at("max_turns").get<int>();
                t.context_policy = policy_from_json(j.at("context_policy"));
                have_header = true;
            } else if (type == "turn") {
                Turn turn;
                turn.index = j.at("index").get<std::size_t>();
                turn.speaker = j.at("speaker").get<std::string>();
                turn.text = j.at("raw").get<std::string>();
                turn.cleaned = j.value("cleaned", clean_turn_text(turn.text));
                turn.request_tag = j.value("request_tag", std::string());
                turn.timestamp = j.value("timestamp", std::string());
                if (turn.index != t.turns.size())
                    throw std::runtime_error("turn index " + std::to_string(turn.index) +
                                             " out of sequence");
                t.turns.push_back(std::move(turn));
            } else if (type == "context_retry") {
                t.context_retries.push_back({j.at("turn_index").get<std::size_t>(),
                                             j.at("history_entries").get<std::size_t>(),
                                             j.at("k").get<std::size_t>(),
                                             j.value("succeeded", false)});
            } else if (type == "end") {
                t.ended_by = end_reason_from_string(j.at("ended_by").get<std::string>());
                t.error = j.value("error", std::string());
            } else {
                throw std::runtime_error("unknown record type '" + type + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("transcript line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header)
        throw std::runtime_error("transcript has no header record");
    return t;
}

Transcript load_transcript(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open transcript " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_transcript(ss.str());
}

// ---- running ----------------------------------------------------------------

MessageList dialogue_messages(const DialogueConfig& cfg, const std::vector<Turn>& turns,
                              const ContextPolicy& policy) {
    const bool a_speaks = turns.size() % 2 == 0;
    const FigurePersona& speaker = a_speaks ? cfg.persona_a : cfg.persona_b;

    // History entry 0 is the icebreaker, asked by persona_b.
    struct Entry {
        const std::string* text;
        bool by_speaker;
    };
    std::vector<Entry> history;
    history.push_back({&cfg.icebreaker, !a_speaks});
    for (const auto& t : turns)
        history.push_back({&t.cleaned, t.speaker == speaker.id});

    std::size_t first = 0;
    if (policy.kind == ContextPolicy::Kind::LastK && history.size() > policy.k)
        first = history.size() - policy.k;

    MessageList msgs;
    msgs.push_back(figure_system_prompt(speaker));
    for (std::size_t i = first; i < history.size(); ++i)
        msgs.push_back({history[i].by_speaker ? Role::Assistant : Role::User, *history[i].text});
    if (cfg.style == PromptStyle::Completion)
        return flatten_for_completion(msgs);
    return msgs;
}

Transcript run_dialogue(const DialogueConfig& cfg, Backend& backend, DialogueOptions opts) {
    cfg.validate();
    Transcript t;
    t.id = cfg.id;
    t.persona_a = cfg.persona_a.id;
    t.persona_b = cfg.persona_b.id;
    t.icebreaker = cfg.icebreaker;
    t.max_turns = cfg.max_turns;
    t.context_policy = cfg.context_policy;
    if (!opts.clock)
        opts.clock = utc_now;
    if (opts.observer)
        opts.observer->on_start(t);

    ContextPolicy policy = cfg.context_policy;
    t.ended_by = EndReason::TurnCap;
    for (int i = 0; i < cfg.max_turns; ++i) {
        const bool a_speaks = i % 2 == 0;
        CompletionRequest req;
        req.model = cfg.model;
        req.temperature = cfg.temperature;
        req.max_tokens = cfg.max_tokens;
        req.request_tag = "dialogue/" + cfg.id + "/" + std::to_string(i);
        req.messages = dialogue_messages(cfg, t.turns, policy);

        std::optional<CompletionResult> result;
        try {
            try {
                result = backend.complete(req);
            } catch (const ApiError& e) {
                if (!e.is_context_overflow())
                    throw;
                ContextRetry retry;
                retry.turn_index = static_cast<std::size_t>(i);
                retry.history_entries = req.messages.size() - 1;
                retry.k = std::max<std::size_t>(1, retry.history_entries / 2);
                policy = ContextPolicy::last_k(retry.k);
                req.messages = dialogue_messages(cfg, t.turns, policy);
                try {
                    result = backend.complete(req);
                    retry.succeeded = true;
                } catch (...) {
                    t.context_retries.push_back(retry);
                    if (opts.observer)
                        opts.observer->on_context_retry(retry);
                    throw;
                }
                t.context_retries.push_back(retry);
                if (opts.observer)
                    opts.observer->on_context_retry(retry);
            }
        } catch (const std::exception& e) {
            t.ended_by = EndReason::BackendError;
            t.error = e.what();
            break;
        }

        Turn turn;
        turn.index = static_cast<std::size_t>(i);
        turn.speaker = a_speaks ? cfg.persona_a.id : cfg.persona_b.id;
        turn.text = result->text;
        turn.cleaned = clean_turn_text(turn.text);
        turn.request_tag = req.request_tag;
        if (!backend.deterministic())
            turn.timestamp = opts.clock();
        t.turns.push_back(turn);
        if (opts.observer)
            opts.observer->on_turn(t.turns.back());
        if (turn.cleaned.empty()) {
            t.ended_by = EndReason::Stop;
            break;
        }
    }
    if (opts.observer)
        opts.observer->on_end(t);
    return t;
}

// ---- identity drift -------------------------------------------------------

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

struct AliasEntry {
    std::string lowered;
    std::string persona_id;
};

struct Pattern {
    std::regex anchor;
    bool needs_comma_after;
};

const std::vector<Pattern>& patterns() {
    static const std::vector<Pattern> p = [] {
        const auto flags = std::regex::ECMAScript | std::regex::optimize;
        std::vector<Pattern> v;
        v.push_back({std::regex(R"(\b(?:i am|i'm) (?:(?:indeed|truly|really|actually|in fact) )?)", flags), false});
        v.push_back({std::regex(R"(\bmy name is (?:(?:indeed|truly|really|actually) )?)", flags), false});
        v.push_back({std::regex(R"(\bas )", flags), true});
        v.push_back({std::regex(R"(\b(?:yours(?: [a-z]+)?|sincerely|regards|respectfully|faithfully|)"
                                R"(admirably|cordially|warmly|in solidarity|in unity|with gratitude|)"
                                R"(with (?:utmost |great |deep )?respect|best wishes|with love),\s*)",
                                flags),
                     false});
        return v;
    }();
    return p;
}

} // namespace

std::vector<DriftEvent> detect_identity_drift(const Transcript& t, const PersonaLibrary& lib) {
    for (const auto& turn : t.turns)
        if (!lib.find(turn.speaker))
            throw UnknownSpeaker(turn.speaker);

    std::vector<AliasEntry> aliases;
    for (const auto& [id, fig] : lib.figures())
        for (const auto& a : fig.aliases)
            aliases.push_back({lowercase(a), id});
    std::stable_sort(aliases.begin(), aliases.end(), [](const AliasEntry& x, const AliasEntry& y) {
        return x.lowered.size() > y.lowered.size();
    });

    std::vector<DriftEvent> events;
    for (const auto& turn : t.turns) {
        const std::string text = lowercase(turn.cleaned);
        std::set<std::size_t> seen_names;  // name start offsets already reported
        for (const auto& pat : patterns()) {
            for (auto it = std::sregex_iterator(text.begin(), text.end(), pat.anchor);
                 it != std::sregex_iterator(); ++it) {
                const std::size_t anchor = static_cast<std::size_t>(it->position(0));
                const std::size_t name_at = anchor + static_cast<std::size_t>(it->length(0));
                const AliasEntry* hit = nullptr;
                for (const auto& a : aliases) {
                    const std::size_t end = name_at + a.lowered.size();
                    if (text.compare(name_at, a.lowered.size(), a.lowered) == 0 &&
                        (end == text.size() || !word_char(text[end]))) {
                        hit = &a;
                        break;
                    }
                }
                if (!hit)
                    continue;
                const std::size_t name_end = name_at + hit->lowered.size();
                if (pat.needs_comma_after && (name_end >= text.size() || text[name_end] != ','))
                    continue;
                if (hit->persona_id == turn.speaker || !seen_names.insert(name_at).second)
                    continue;
                DriftEvent ev;
                ev.turn_index = turn.index;
                ev.asserted_name = turn.cleaned.substr(name_at, hit->lowered.size());
                ev.asserted_persona_id = hit->persona_id;
                ev.expected_persona_id = turn.speaker;
                ev.evidence_span = {anchor, name_end};
                ev.evidence = turn.cleaned.substr(anchor, name_end - anchor);
                events.push_back(std::move(ev));
            }
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const DriftEvent& a, const DriftEvent& b) {
        return a.turn_index != b.turn_index ? a.turn_index < b.turn_index
                                            : a.evidence_span.begin < b.evidence_span.begin;
    });
    return events;
}

// ---- repetition and mirroring -----------------------------------------------

std::vector<std::string> normalized_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c == '\'')
            continue;
        // U+2019 right single quotation mark
        if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            static_cast<unsigned char>(text[i + 2]) == 0x99) {
            i += 2;
            continue;
        }
        if (std::isalnum(c) || c >= 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

namespace {

std::set<std::string> ngrams(std::string_view text, std::size_t n) {
    const auto words = normalized_words(text);
    std::set<std::string> out;
    if (words.empty())
        return out;
    auto join = [&](std::size_t from, std::size_t count) {
        std::string g = words[from];
        for (std::size_t k = 1; k < count; ++k)
            g += ' ' + words[from + k];
        return g;
    };
    if (words.size() < n) {
        out.insert(join(0, words.size()));
        return out;
    }
    for (std::size_t i = 0; i + n <= words.size(); ++i)
        out.insert(join(i, n));
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty())
        return 0.0;
    std::size_t common = 0;
    for (const auto& g : a)
        common += b.count(g);
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

} // namespace

double ngram_jaccard(std::string_view a, std::string_view b, std::size_t n) {
    if (n == 0)
        throw std::invalid_argument("n-gram size must be at least 1");
    return jaccard(ngrams(a, n), ngrams(b, n));
}

std::vector<double> repetition_score(const Transcript& t, std::size_t n) {
    if (n == 0)
        throw std::invalid_argument("n-gram size must be at least 1");
    std::vector<double> out(t.turns.size(), 0.0);
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        for (std::size_t j = i; j-- > 0;) {
            if (t.turns[j].speaker == t.turns[i].speaker) {
                out[i] = ngram_jaccard(t.turns[i].cleaned, t.turns[j].cleaned, n);
                break;
            }
        }
    }
    return out;
}

std::vector<double> mirror_score(const Transcript& t, std::size_t n) {
    if (n == 0)
        throw std::invalid_argument("n-gram size must be at least 1");
    std::vector<double> out(t.turns.size(), 0.0);
    for (std::size_t i = 1; i < t.turns.size(); ++i)
        if (t.turns[i - 1].speaker != t.turns[i].speaker)
            out[i] = ngram_jaccard(t.turns[i].cleaned, t.turns[i - 1].cleaned, n);
    return out;
}

double mean(const std::vector<double>& v) {
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

Transcript shuffled_control(const Transcript& t, std::uint64_t seed) {
    Transcript out = t;
    std::vector<std::size_t> order(t.turns.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    // Fisher-Yates over mt19937_64, whose output sequence is fixed by the standard.
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.turns[i].text = t.turns[order[i]].text;
        out.turns[i].cleaned = t.turns[order[i]].cleaned;
    }
    return out;
}

FidelityReport analyze_transcript(const Transcript& t, const PersonaLibrary& lib, std::size_t n,
                                  std::uint64_t seed) {
    FidelityReport r;
    r.ngram = n;
    r.shuffle_seed = seed;
    r.drift_events = detect_identity_drift(t, lib);
    r.repetition = repetition_score(t, n);
    r.mirroring = mirror_score(t, n);
    r.mean_repetition = mean(r.repetition);
    r.mean_mirroring = mean(r.mirroring);
    r.shuffled_mean_mirroring = mean(mirror_score(shuffled_control(t, seed), n));
    return r;
}

std::string serialize_fidelity(const FidelityReport& r) {
    json events = json::array();
    for (const auto& e : r.drift_events)
        events.push_back({{"turn_index", e.turn_index},
                          {"asserted_name", e.asserted_name},
                          {"asserted_persona_id", e.asserted_persona_id},
                          {"expected_persona_id", e.expected_persona_id},
                          {"evidence_span", {e.evidence_span.begin, e.evidence_span.end}},
                          {"evidence", e.evidence}});
    json doc = {{"ngram", r.ngram},
                {"drift_events", events},
                {"repetition", r.repetition},
                {"mirroring", r.mirroring},
                {"mean_repetition", r.mean_repetition},
                {"mean_mirroring", r.mean_mirroring},
                {"shuffled_control", {{"seed", r.shuffle_seed}, {"mean_mirroring", r.shuffled_mean_mirroring}}}};
    return doc.dump(2) + "\n";
}

} // namespace steer
