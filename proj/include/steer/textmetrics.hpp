#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

// Sparse vector: dimension -> weight.
struct TokenVector {
    std::map<std::uint64_t, double> weights;

    bool empty() const { return weights.empty(); }
    double norm() const;
    friend bool operator==(const TokenVector&, const TokenVector&) = default;
};

// dot(a, b) / (|a| |b|); 0 when either vector has zero norm.
double cosine_similarity(const TokenVector& a, const TokenVector& b);

// Lowercased alphanumeric runs; bytes >= 0x80 count as word characters.
std::vector<std::string> simple_tokens(std::string_view text);

// 64-bit FNV-1a, used as the fallback embedding's dimension index.
std::uint64_t stable_hash(std::string_view token);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual TokenVector embed(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

// Hashed term-frequency vectors. Offline and platform independent.
class FallbackEmbedder : public Embedder {
public:
    TokenVector embed(std::string_view text) const override;
    std::string name() const override { return "hashed-tf"; }
};

// Adapter for an external vector service: the callback returns a dense
// vector, stored as dimensions 0..n-1.
class ExternalEmbedder : public Embedder {
public:
    using Fn = std::function<std::vector<double>(std::string_view)>;
    ExternalEmbedder(Fn fn, std::string name) : fn_(std::move(fn)), name_(std::move(name)) {}
    TokenVector embed(std::string_view text) const override;
    std::string name() const override { return name_; }

private:
    Fn fn_;
    std::string name_;
};

TokenVector embed(std::string_view text, const Embedder& provider = FallbackEmbedder{});

// Cosine between prompt and response embeddings.
double contextual_relevance(std::string_view prompt, std::string_view response,
                            const Embedder& provider = FallbackEmbedder{});

struct SentimentLexicon {
    std::map<std::string, double, std::less<>> polarity;  // lowercase word -> signed weight
    std::set<std::string, std::less<>> negations;
};

// Lines of `word<TAB>weight` or `word<TAB>negation`; '#' starts a comment.
SentimentLexicon parse_lexicon(std::string_view content);
SentimentLexicon load_lexicon(const std::filesystem::path& path);

struct SentimentResult {
    double score = 0.0;  // (P - N) / (P + N), 0 with no matches
    int positive_count = 0;
    int negative_count = 0;
};

// A matched word flips polarity when one of the two preceding tokens is a
// negation word.
SentimentResult sentiment_polarity(std::string_view text, const SentimentLexicon& lexicon);

// Lowercased word tokens keeping inner apostrophes ("don't").
std::vector<std::string> sentiment_tokens(std::string_view text);

struct TextStats {
    int words = 0;
    int sentences = 0;
    int syllables = 0;
    int characters = 0;  // non-whitespace characters
    double fk_grade = 0.0;  // 0 when there are no words
};

class EmptyText : public std::invalid_argument {
public:
    EmptyText() : std::invalid_argument("text is empty") {}
};

// Vowel-group heuristic; approximate.
int count_syllables(std::string_view word);

// Flesch-Kincaid grade level statistics.
TextStats text_stats(std::string_view text);

} // namespace steer
