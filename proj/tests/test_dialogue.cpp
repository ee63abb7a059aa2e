#include "helpers.hpp"

#include "steer/backend.hpp"
#include "steer/dialogue.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using namespace steer;

namespace {

PersonaLibrary library() { return load_persona_library(testing::slurp(testing::data_dir() / "personas.json")); }

DialogueConfig shipped_config(const std::string& stem, const PersonaLibrary& lib) {
    return load_dialogue_config(testing::slurp(testing::data_dir() / "dialogues" / (stem + ".json")), lib);
}

Transcript replay(const std::string& stem, const PersonaLibrary& lib) {
    auto backend = replay_from_fixture(testing::data_dir() / "fixtures" / ("dialogue_" + stem + ".jsonl"));
    return run_dialogue(shipped_config(stem, lib), *backend);
}

Transcript two_turns(const std::string& a_text, const std::string& b_text) {
    Transcript t;
    t.persona_a = "mandela";
    t.persona_b = "gandhi";
    t.turns.push_back({0, "mandela", a_text, a_text, "", ""});
    t.turns.push_back({1, "gandhi", b_text, b_text, "", ""});
    return t;
}

Transcript single_turn(const std::string& speaker, const std::string& text) {
    Transcript t;
    t.turns.push_back({0, speaker, text, clean_turn_text(text), "", ""});
    return t;
}

} // namespace

TEST_CASE("turn text cleaning") {
    CHECK(clean_turn_text("<p>Hello   there</p>\n\n") == "Hello there");
    CHECK(clean_turn_text("Fish &amp; chips") == "Fish & chips");
    CHECK(clean_turn_text("3 < 5 and 7 > 2") == "3 < 5 and 7 > 2");
    CHECK(clean_turn_text("   ") == "");
}

TEST_CASE("dialogue config loading") {
    const auto lib = library();
    const auto cfg = shipped_config("gandhi_mandela", lib);
    CHECK(cfg.id == "gandhi-mandela");
    CHECK(cfg.persona_a.id == "mandela");
    CHECK(cfg.persona_b.id == "gandhi");
    CHECK(cfg.max_turns == 50);
    CHECK(cfg.context_policy == ContextPolicy::full_history());
    CHECK_THROWS(load_dialogue_config(R"({"id": "x", "persona_a": "nobody", "persona_b": "gandhi",
                                          "icebreaker": "hi"})",
                                      lib));
    CHECK_THROWS(load_dialogue_config(R"({"id": "x", "persona_a": "gandhi", "persona_b": "gandhi",
                                          "icebreaker": "hi"})",
                                      lib));
    CHECK_THROWS_AS(ContextPolicy::last_k(0), std::invalid_argument);
}

TEST_CASE("messages seen by each speaker") {
    const auto lib = library();
    DialogueConfig cfg = shipped_config("gandhi_mandela", lib);
    std::vector<Turn> turns;
    auto first = dialogue_messages(cfg, turns, cfg.context_policy);
    REQUIRE(first.size() == 2);
    CHECK(first[0].role == Role::System);
    CHECK(first[0].content.find("Nelson Mandela") != std::string::npos);
    CHECK(first[1].role == Role::User);
    CHECK(first[1].content == cfg.icebreaker);

    turns.push_back({0, "mandela", "A0", "A0", "", ""});
    auto second = dialogue_messages(cfg, turns, cfg.context_policy);
    REQUIRE(second.size() == 3);
    CHECK(second[0].content.find("Mahatma Gandhi") != std::string::npos);
    // Gandhi asked the icebreaker, so it is his own (assistant) message.
    CHECK(second[1].role == Role::Assistant);
    CHECK(second[2].role == Role::User);
    CHECK(second[2].content == "A0");

    turns.push_back({1, "gandhi", "B1", "B1", "", ""});
    turns.push_back({2, "mandela", "A2", "A2", "", ""});
    auto windowed = dialogue_messages(cfg, turns, ContextPolicy::last_k(2));
    REQUIRE(windowed.size() == 3);
    CHECK(windowed[1].content == "B1");
    CHECK(windowed[2].content == "A2");

    cfg.style = PromptStyle::Completion;
    CHECK(dialogue_messages(cfg, turns, cfg.context_policy).size() == 1);
}

TEST_CASE("published dialogues replay to 50 alternating turns") {
    const auto lib = library();
    for (const char* stem : {"gandhi_mandela", "beethoven_mozart", "alexander_elizabeth"}) {
        const auto t = replay(stem, lib);
        CHECK(t.turns.size() == 50);
        CHECK(t.ended_by == EndReason::TurnCap);
        for (std::size_t i = 0; i < t.turns.size(); ++i) {
            CHECK(t.turns[i].index == i);
            CHECK(t.turns[i].speaker == (i % 2 == 0 ? t.persona_a : t.persona_b));
            CHECK(t.turns[i].timestamp.empty());
        }
    }
    const auto excerpt = replay("alexander_elizabeth_excerpt", lib);
    CHECK(excerpt.turns.size() == 2);
}

TEST_CASE("replayed turns equal the fixture text") {
    const auto lib = library();
    const auto t = replay("gandhi_mandela", lib);
    std::istringstream in(testing::slurp(testing::data_dir() / "fixtures" / "dialogue_gandhi_mandela.jsonl"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto rec = nlohmann::json::parse(line);
        const auto idx = std::stoul(rec["tag"].get<std::string>().substr(std::string("dialogue/gandhi-mandela/").size()));
        REQUIRE(idx < t.turns.size());
        CHECK(t.turns[idx].text == rec["text"].get<std::string>());
        ++n;
    }
    CHECK(n == 50);
}

TEST_CASE("scripted dialogue runs") {
    const auto lib = library();
    DialogueConfig cfg = shipped_config("beethoven_mozart", lib);

    SUBCASE("two hellos") {
        cfg.max_turns = 2;
        auto b = ScriptedBackend::constant("hello");
        const auto t = run_dialogue(cfg, *b);
        REQUIRE(t.turns.size() == 2);
        CHECK(t.turns[0].text == "hello");
        CHECK(t.turns[1].text == "hello");
        CHECK(t.turns[1].request_tag == "dialogue/beethoven-mozart/1");
    }
    SUBCASE("backend failure ends the run and is recorded") {
        ScriptedBackend b([](const CompletionRequest&, std::size_t call) -> CompletionResult {
            if (call == 3)
                throw TransportError("connection reset");
            return {"turn"};
        });
        const auto t = run_dialogue(cfg, b);
        CHECK(t.turns.size() == 3);
        CHECK(t.ended_by == EndReason::BackendError);
        CHECK(t.error.find("connection reset") != std::string::npos);
    }
    SUBCASE("empty reply stops") {
        auto b = ScriptedBackend::sequence({"one", "  "});
        const auto t = run_dialogue(cfg, *b);
        CHECK(t.turns.size() == 2);
        CHECK(t.ended_by == EndReason::Stop);
    }
    SUBCASE("context overflow halves the window once") {
        std::vector<std::size_t> sizes;
        ScriptedBackend b([&](const CompletionRequest& req, std::size_t) -> CompletionResult {
            sizes.push_back(req.messages.size());
            if (req.messages.size() > 5)
                throw ApiError(400, "maximum context length exceeded");
            return {"ok"};
        });
        cfg.max_turns = 8;
        const auto t = run_dialogue(cfg, b);
        CHECK(t.turns.size() == 8);
        CHECK(t.ended_by == EndReason::TurnCap);
        REQUIRE(t.context_retries.size() == 1);
        CHECK(t.context_retries[0].turn_index == 4);
        CHECK(t.context_retries[0].history_entries == 5);
        CHECK(t.context_retries[0].k == 2);
        CHECK(t.context_retries[0].succeeded);
        // Later turns keep the smaller window.
        CHECK(sizes.back() == 3);
    }
    SUBCASE("overflow on the retry as well ends the run") {
        ScriptedBackend b([](const CompletionRequest&, std::size_t call) -> CompletionResult {
            if (call >= 1)
                throw ApiError(413, "too large");
            return {"ok"};
        });
        const auto t = run_dialogue(cfg, b);
        CHECK(t.ended_by == EndReason::BackendError);
        REQUIRE(t.context_retries.size() == 1);
        CHECK_FALSE(t.context_retries[0].succeeded);
    }
    SUBCASE("non-deterministic backends get timestamps") {
        class Live : public Backend {
        public:
            CompletionResult complete(const CompletionRequest&) override { return {"hi"}; }
            std::string identity() const override { return "live"; }
        } live;
        cfg.max_turns = 2;
        DialogueOptions opts;
        opts.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
        const auto t = run_dialogue(cfg, live, opts);
        CHECK(t.turns[0].timestamp == "2026-01-01T00:00:00Z");
    }
}

TEST_CASE("transcript persistence") {
    const auto lib = library();
    const auto t = replay("gandhi_mandela", lib);
    const std::string text = serialize_transcript(t);
    const auto back = parse_transcript(text);
    CHECK(back.turns.size() == 50);
    CHECK(back.ended_by == EndReason::TurnCap);
    CHECK(serialize_transcript(back) == text);

    // The incremental writer produces the same bytes.
    std::ostringstream os;
    TranscriptWriter w(os);
    auto b = replay_from_fixture(testing::data_dir() / "fixtures" / "dialogue_gandhi_mandela.jsonl");
    DialogueOptions opts;
    opts.observer = &w;
    run_dialogue(shipped_config("gandhi_mandela", lib), *b, opts);
    CHECK(os.str() == text);

    // A run cut short loads as incomplete.
    const auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    CHECK(parse_transcript(cut).ended_by == EndReason::Incomplete);
    CHECK_THROWS(parse_transcript("{\"type\":\"turn\",\"index\":0,\"speaker\":\"a\",\"raw\":\"x\"}\n"));
}

TEST_CASE("identity drift on the published dialogues") {
    const auto lib = library();
    const auto gm = detect_identity_drift(replay("gandhi_mandela", lib), lib);
    REQUIRE(gm.size() >= 1);
    bool signed_turn = false;
    for (const auto& e : gm) {
        CHECK(e.expected_persona_id == "gandhi");
        CHECK(e.asserted_persona_id == "mandela");
        if (e.evidence == "Sincerely, Nelson Mandela")
            signed_turn = true;
    }
    CHECK(signed_turn);
    CHECK(detect_identity_drift(replay("beethoven_mozart", lib), lib).empty());
    CHECK(detect_identity_drift(replay("alexander_elizabeth", lib), lib).empty());
    CHECK(detect_identity_drift(replay("alexander_elizabeth_excerpt", lib), lib).empty());
}

TEST_CASE("identity drift rules") {
    const auto lib = library();
    CHECK(detect_identity_drift(single_turn("mandela", "I am not Mahatma Gandhi, but Nelson Mandela."), lib).empty());
    CHECK(detect_identity_drift(single_turn("mandela", "Dear Mahatma Gandhi, thank you."), lib).empty());
    CHECK(detect_identity_drift(single_turn("gandhi", "I am Mahatma Gandhi."), lib).empty());

    const auto claim = detect_identity_drift(single_turn("gandhi", "I am Nelson Mandela, and proud of it."), lib);
    REQUIRE(claim.size() == 1);
    CHECK(claim[0].asserted_name == "Nelson Mandela");
    CHECK(claim[0].evidence_span.begin == 0);

    CHECK(detect_identity_drift(single_turn("gandhi", "As Nelson Mandela, I say this."), lib).size() == 1);
    // Quoting someone is not a claim to be them.
    CHECK(detect_identity_drift(single_turn("gandhi", "As Nelson Mandela said, peace."), lib).empty());
    CHECK(detect_identity_drift(single_turn("gandhi", "As Nelson Mandela argued."), lib).empty());
    CHECK(detect_identity_drift(single_turn("mozart", "Yours truly, Beethoven"), lib).size() == 1);
    CHECK(detect_identity_drift(single_turn("mozart", "my name is Ludwig van Beethoven"), lib)[0].asserted_name ==
          "Ludwig van Beethoven");
    // Alias prefixes of longer words do not match.
    CHECK(detect_identity_drift(single_turn("gandhi", "I am Mandelaesque in spirit."), lib).empty());
    CHECK_THROWS_AS(detect_identity_drift(single_turn("stranger", "hello"), lib), UnknownSpeaker);
}

TEST_CASE("n-gram overlap") {
    CHECK(ngram_jaccard("a b c d", "b c d e", 3) == doctest::Approx(1.0 / 3.0));
    CHECK(ngram_jaccard("same words here", "same words here", 3) == 1.0);
    CHECK(ngram_jaccard("alpha beta gamma", "delta epsilon zeta", 3) == 0.0);
    CHECK(ngram_jaccard("", "", 3) == 0.0);
    CHECK(ngram_jaccard("Don't stop!", "dont STOP", 3) == 1.0);
    CHECK_THROWS(ngram_jaccard("a", "b", 0));
    CHECK(normalized_words("It's a well-known fact.") == std::vector<std::string>{"its", "a", "well", "known", "fact"});
}

TEST_CASE("repetition and mirroring") {
    Transcript rep;
    rep.turns = {{0, "a", "x", "one two three four", "", ""},
                 {1, "b", "x", "alpha beta gamma", "", ""},
                 {2, "a", "x", "one two three four", "", ""}};
    CHECK(repetition_score(rep) == std::vector<double>{0.0, 0.0, 1.0});

    const auto parrot = two_turns("we must walk together", "we must walk together");
    CHECK(mirror_score(parrot) == std::vector<double>{0.0, 1.0});
    const auto disjoint = two_turns("we must walk together", "music is my life");
    CHECK(mirror_score(disjoint) == std::vector<double>{0.0, 0.0});
    CHECK(mean({}) == 0.0);
}

TEST_CASE("fidelity of the published dialogues") {
    const auto lib = library();
    const auto gm = replay("gandhi_mandela", lib);
    const auto report = analyze_transcript(gm, lib, 3, 7);
    // Frozen from an independent Python implementation of the same rules.
    CHECK(report.mean_mirroring == doctest::Approx(0.04517811518285019).epsilon(1e-12));
    CHECK(report.mean_repetition == doctest::Approx(0.055210562589781596).epsilon(1e-12));
    CHECK(report.mean_mirroring > report.shuffled_mean_mirroring);
    CHECK(report.shuffle_seed == 7);

    const auto bm = analyze_transcript(replay("beethoven_mozart", lib), lib);
    CHECK(bm.mean_mirroring == doctest::Approx(0.04120633979250181).epsilon(1e-12));
    CHECK(bm.drift_events.empty());

    // Shuffling keeps speakers and the multiset of texts.
    const auto sh = shuffled_control(gm, 7);
    CHECK(sh.turns.size() == gm.turns.size());
    std::vector<std::string> a, b;
    for (std::size_t i = 0; i < gm.turns.size(); ++i) {
        CHECK(sh.turns[i].speaker == gm.turns[i].speaker);
        a.push_back(gm.turns[i].cleaned);
        b.push_back(sh.turns[i].cleaned);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(serialize_transcript(shuffled_control(gm, 7)) == serialize_transcript(sh));

    const auto j = nlohmann::json::parse(serialize_fidelity(report));
    CHECK(j["drift_events"].size() == report.drift_events.size());
    CHECK(j["shuffled_control"]["seed"] == 7);
}
