#include "steer/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace steer {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
bool is_vowel(char c) {
    switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
    default: return false;
    }
}
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

} // namespace

double TokenVector::norm() const {
    double s = 0.0;
    for (const auto& [_, w] : weights)
        s += w * w;
    return std::sqrt(s);
}

double cosine_similarity(const TokenVector& a, const TokenVector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    const auto& small = a.weights.size() <= b.weights.size() ? a.weights : b.weights;
    const auto& large = &small == &a.weights ? b.weights : a.weights;
    double dot = 0.0;
    for (const auto& [dim, w] : small) {
        auto it = large.find(dim);
        if (it != large.end())
            dot += w * it->second;
    }
    // Rounding can push identical vectors a hair past 1.
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::vector<std::string> simple_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (word_byte(static_cast<unsigned char>(c))) {
            cur += lower(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

std::uint64_t stable_hash(std::string_view token) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

TokenVector FallbackEmbedder::embed(std::string_view text) const {
    TokenVector v;
    for (const auto& tok : simple_tokens(text))
        v.weights[stable_hash(tok)] += 1.0;
    return v;
}

TokenVector ExternalEmbedder::embed(std::string_view text) const {
    TokenVector v;
    const auto dense = fn_(text);
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (!std::isfinite(dense[i]))
            throw std::runtime_error(name_ + ": embedding has a non-finite component");
        if (dense[i] != 0.0)
            v.weights[i] = dense[i];
    }
    return v;
}

TokenVector embed(std::string_view text, const Embedder& provider) { return provider.embed(text); }

double contextual_relevance(std::string_view prompt, std::string_view response,
                            const Embedder& provider) {
    return cosine_similarity(provider.embed(prompt), provider.embed(response));
}

SentimentLexicon parse_lexicon(std::string_view content) {
    SentimentLexicon lex;
    std::istringstream in{std::string(content)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("lexicon line " + std::to_string(lineno) + ": missing tab");
        std::string word = line.substr(0, tab);
        for (auto& c : word)
            c = lower(c);
        const std::string value = line.substr(tab + 1);
        if (value == "negation") {
            lex.negations.insert(word);
            continue;
        }
        try {
            std::size_t used = 0;
            const double w = std::stod(value, &used);
            if (used != value.size() || !std::isfinite(w) || w == 0.0)
                throw std::invalid_argument(value);
            lex.polarity[word] = w;
        } catch (const std::exception&) {
            throw std::runtime_error("lexicon line " + std::to_string(lineno) +
                                     ": bad polarity '" + value + "'");
        }
    }
    if (lex.polarity.empty())
        throw std::runtime_error("lexicon has no polarity entries");
    return lex;
}

SentimentLexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open lexicon " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_lexicon(ss.str());
}

std::vector<std::string> sentiment_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        while (!cur.empty() && cur.back() == '\'')
            cur.pop_back();
        if (!cur.empty())
            out.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u) || (c == '\'' && !cur.empty()))
            cur += lower(c);
        else
            flush();
    }
    flush();
    return out;
}

SentimentResult sentiment_polarity(std::string_view text, const SentimentLexicon& lexicon) {
    if (lexicon.polarity.empty())
        throw std::invalid_argument("sentiment lexicon is empty");
    const auto tokens = sentiment_tokens(text);
    SentimentResult r;
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = lexicon.polarity.find(tokens[i]);
        if (it == lexicon.polarity.end())
            continue;
        double w = it->second;
        for (std::size_t back = 1; back <= 2 && back <= i; ++back)
            if (lexicon.negations.count(tokens[i - back])) {
                w = -w;
                break;
            }
        if (w > 0) {
            pos += w;
            ++r.positive_count;
        } else {
            neg += -w;
            ++r.negative_count;
        }
    }
    if (pos + neg > 0)
        r.score = (pos - neg) / (pos + neg);
    return r;
}

int count_syllables(std::string_view word) {
    std::string w;
    for (char c : word)
        if (std::isalpha(static_cast<unsigned char>(c)))
            w += lower(c);
    if (w.empty())
        return 0;
    int groups = 0;
    bool in_group = false;
    for (char c : w) {
        const bool v = is_vowel(c);
        if (v && !in_group)
            ++groups;
        in_group = v;
    }
    const std::size_t n = w.size();
    if (w[n - 1] == 'e') {
        const bool consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if (!consonant_le)
            --groups;
    }
    return std::max(groups, 1);
}

TextStats text_stats(std::string_view text) {
    TextStats s;
    bool any = false;
    bool letter_in_sentence = false;
    std::string word;
    bool word_has_letter = false;
    auto end_word = [&] {
        if (word_has_letter) {
            ++s.words;
            s.syllables += count_syllables(word);
        }
        word.clear();
        word_has_letter = false;
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            end_word();
            continue;
        }
        any = true;
        ++s.characters;
        word += c;
        if (std::isalpha(u)) {
            word_has_letter = true;
            letter_in_sentence = true;
        }
        if ((c == '.' || c == '!' || c == '?') && letter_in_sentence) {
            ++s.sentences;
            letter_in_sentence = false;
        }
    }
    end_word();
    if (!any)
        throw EmptyText();
    if (letter_in_sentence)
        ++s.sentences;
    if (s.words > 0)
        s.fk_grade = 0.39 * (static_cast<double>(s.words) / s.sentences) +
                     11.8 * (static_cast<double>(s.syllables) / s.words) - 15.59;
    return s;
}

} // namespace steer
