#pragma once

#include "steer/inventory.hpp"
#include "steer/message.hpp"
#include "steer/trait.hpp"

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

struct TraitPersona {
    Trait trait = Trait::Openness;
    std::string instruction;    // full role prompt
    std::string response_rule;  // the rating-format clause at its end
};

// Verbatim role prompt for one trait.
const TraitPersona& trait_prompt(Trait t);

// Whole-survey sends every item in one user message; chunked sends
// ceil(N / chunk_size) user messages.
struct Batching {
    std::size_t chunk_size = 0;  // 0 = whole survey

    static Batching whole_survey() { return {}; }
    static Batching chunked(std::size_t k);
    bool is_whole() const { return chunk_size == 0; }
    std::size_t batch_count(std::size_t items) const;
    friend bool operator==(const Batching&, const Batching&) = default;
};

class PersonaError : public std::invalid_argument {
public:
    enum class Code { EmptyInventory, EmptyRole, InvalidPersona, DuplicateId, UnknownPersona };
    PersonaError(Code code, const std::string& what)
        : std::invalid_argument(what), code(code) {}
    Code code;
};

// System instruction followed by the questionnaire user message(s), in item
// order.
MessageList build_survey_messages(const TraitPersona& persona, const Inventory& inv,
                                  Batching batch = Batching::whole_survey());

struct FigurePersona {
    std::string id;
    std::string display_name;
    std::string role_description;
    std::vector<std::string> aliases;  // name variants used for drift detection
};

ChatMessage figure_system_prompt(const FigurePersona& fig);

class PersonaLibrary {
public:
    PersonaLibrary() = default;
    explicit PersonaLibrary(std::vector<FigurePersona> figures);

    void add(FigurePersona fig);
    const FigurePersona& at(std::string_view id) const;
    const FigurePersona* find(std::string_view id) const;
    const std::map<std::string, FigurePersona, std::less<>>& figures() const { return figures_; }
    bool empty() const { return figures_.empty(); }

private:
    std::map<std::string, FigurePersona, std::less<>> figures_;
};

// {"figures": [{"id", "display_name", "role_description", "aliases": [...]}]}
PersonaLibrary load_persona_library(std::string_view document);
std::string serialize_persona_library(const PersonaLibrary& lib);

} // namespace steer
