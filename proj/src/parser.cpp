#include "steer/parser.hpp"

#include <cctype>
#include <charconv>

namespace steer {

std::string_view mode_name(ParsePolicy::Mode m) {
    return m == ParsePolicy::Mode::Strict ? "strict" : "lenient";
}

ParsePolicy::Mode mode_from_string(std::string_view s) {
    if (s == "strict") return ParsePolicy::Mode::Strict;
    if (s == "lenient") return ParsePolicy::Mode::Lenient;
    throw std::invalid_argument("parse mode must be 'strict' or 'lenient', got '" +
                                std::string(s) + "'");
}

ParseError ParseError::empty() { return ParseError(Code::Empty, "empty response"); }

ParseError ParseError::count_mismatch(std::size_t found, std::size_t expected) {
    ParseError e(Code::CountMismatch, "found " + std::to_string(found) + " ratings, expected " +
                                          std::to_string(expected));
    e.found = found;
    e.expected = expected;
    return e;
}

ParseError ParseError::out_of_scale(std::string token, std::size_t position) {
    ParseError e(Code::OutOfScale,
                 "token '" + token + "' at offset " + std::to_string(position) + " is out of scale");
    e.token = std::move(token);
    e.position = position;
    return e;
}

std::string_view code_name(ParseError::Code c) {
    switch (c) {
    case ParseError::Code::Empty: return "Empty";
    case ParseError::Code::CountMismatch: return "CountMismatch";
    case ParseError::Code::OutOfScale: return "OutOfScale";
    }
    return "Unknown";
}

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool blank(std::string_view s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c)))
            return false;
    return true;
}

bool in_scale(const NumberToken& t, const ParsePolicy& p) {
    return !t.decimal && t.value >= p.scale_min && t.value <= p.scale_max;
}

Rating make_rating(int id, const NumberToken& t) {
    return Rating{id, static_cast<int>(t.value), t.span};
}

} // namespace

std::vector<NumberToken> scan_numbers(std::string_view raw) {
    std::vector<NumberToken> out;
    std::size_t line = 0;
    std::size_t i = 0;
    while (i < raw.size()) {
        const char c = raw[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (!is_digit(c)) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        std::size_t end = i;
        while (end < raw.size() && is_digit(raw[end]))
            ++end;
        bool decimal = false;
        if (end + 1 < raw.size() && raw[end] == '.' && is_digit(raw[end + 1])) {
            decimal = true;
            end += 1;
            while (end < raw.size() && is_digit(raw[end]))
                ++end;
        }
        const bool glued_before = begin > 0 && is_alnum(raw[begin - 1]);
        const bool glued_after = end < raw.size() && is_alnum(raw[end]);
        // A minus directly attached and not part of a word makes the number negative.
        if (!glued_before && begin > 0 && raw[begin - 1] == '-' &&
            (begin < 2 || !is_alnum(raw[begin - 2])))
            --begin;
        if (!glued_before && !glued_after) {
            NumberToken t;
            t.text = std::string(raw.substr(begin, end - begin));
            t.decimal = decimal;
            t.span = {begin, end};
            t.line = line;
            if (!decimal) {
                const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.value);
                if (res.ec != std::errc())
                    t.value = raw[begin] == '-' ? -1 : 1'000'000'000;  // overflow: always out of scale
            }
            out.push_back(std::move(t));
        }
        i = end;
    }
    return out;
}

std::vector<Rating> extract_ratings(std::string_view raw, const std::vector<int>& expected,
                                    const ParsePolicy& policy) {
    if (expected.empty())
        throw std::invalid_argument("extract_ratings: expected id list is empty");
    if (blank(raw))
        throw ParseError::empty();

    const auto tokens = scan_numbers(raw);
    std::vector<Rating> out;
    out.reserve(expected.size());

    if (policy.mode == ParsePolicy::Mode::Strict) {
        for (const auto& t : tokens)
            if (!in_scale(t, policy))
                throw ParseError::out_of_scale(t.text, t.span.begin);
        if (tokens.size() != expected.size())
            throw ParseError::count_mismatch(tokens.size(), expected.size());
        for (std::size_t i = 0; i < tokens.size(); ++i)
            out.push_back(make_rating(expected[i], tokens[i]));
        return out;
    }

    std::vector<const NumberToken*> flat;
    std::vector<const NumberToken*> per_line;  // rightmost in-scale token of each line
    for (const auto& t : tokens) {
        if (!in_scale(t, policy))
            continue;
        flat.push_back(&t);
        if (!per_line.empty() && per_line.back()->line == t.line)
            per_line.back() = &t;
        else
            per_line.push_back(&t);
    }
    const bool line_mode = per_line.size() >= 2 && per_line.size() >= expected.size();
    const auto& chosen = line_mode ? per_line : flat;
    if (chosen.size() < expected.size())
        throw ParseError::count_mismatch(chosen.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        out.push_back(make_rating(expected[i], *chosen[i]));
    return out;
}

int parse_single_rating(std::string_view raw, const ParsePolicy& policy) {
    return extract_ratings(raw, {1}, policy).front().value;
}

} // namespace steer
