#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

struct ParsePolicy {
    enum class Mode { Strict, Lenient };
    Mode mode = Mode::Strict;
    int scale_min = 1;
    int scale_max = 5;

    static ParsePolicy strict(int lo = 1, int hi = 5) { return {Mode::Strict, lo, hi}; }
    static ParsePolicy lenient(int lo = 1, int hi = 5) { return {Mode::Lenient, lo, hi}; }
    friend bool operator==(const ParsePolicy&, const ParsePolicy&) = default;
};

std::string_view mode_name(ParsePolicy::Mode m);
ParsePolicy::Mode mode_from_string(std::string_view s);

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last character
    friend bool operator==(const Span&, const Span&) = default;
};

struct Rating {
    int item_id = 0;
    int value = 0;
    Span source_span;
};

class ParseError : public std::runtime_error {
public:
    enum class Code { Empty, CountMismatch, OutOfScale };

    static ParseError empty();
    static ParseError count_mismatch(std::size_t found, std::size_t expected);
    static ParseError out_of_scale(std::string token, std::size_t position);

    Code code;
    std::size_t found = 0;
    std::size_t expected = 0;
    std::string token;
    std::size_t position = 0;

private:
    ParseError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
};

std::string_view code_name(ParseError::Code c);

// Numeric tokens as the parser sees them, in reading order. Digit runs glued
// to letters or other digits ("Q1", "5th") are not tokens; a decimal such as
// "4.5" is one token flagged `decimal`.
struct NumberToken {
    std::string text;
    long long value = 0;
    bool decimal = false;
    Span span;
    std::size_t line = 0;
};

std::vector<NumberToken> scan_numbers(std::string_view raw);

// Assigns one rating per expected id, in order.
//
// Strict: the text must hold exactly |expected| integers, all in scale.
// Lenient: in-scale integers are collected in reading order and the first
// |expected| are used. If at least two lines carry an in-scale integer and
// there are at least |expected| such lines, the rightmost in-scale integer of
// each line is used instead, which handles "1. Agree (5)" style echoes.
std::vector<Rating> extract_ratings(std::string_view raw, const std::vector<int>& expected,
                                    const ParsePolicy& policy);

int parse_single_rating(std::string_view raw, const ParsePolicy& policy);

} // namespace steer
