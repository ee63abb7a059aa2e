#include "steer/persona.hpp"

#include <json.hpp>

#include <algorithm>

namespace steer {

using nlohmann::json;

namespace {

constexpr std::string_view kRuleStart = "Rate each of the following statements";

const std::array<const char*, kTraitCount> kInstructions = {
    // Openness
    "Act in the role of extreme openness, sometimes called intellect or imagination, "
    "this represents the willingness to try new things and think outside the box. "
    "Rate each of the following statements on a scale of 1-5 based on if you agree "
    "(5), slightly agree (4), neutral (3), slightly disagree (2), or disagree (1). "
    "Continue to role-play the given character throughout the survey without "
    "deviating and distill your response down to only the numbers 1-5. Answer the "
    "prompt as is and do not add any information.",
    // Conscientiousness
    "Act in the role of extreme conscientiousness, sometimes called the desire to be "
    "careful, diligent, and to regulate immediate gratification with self-discipline, "
    "this represents the tendency to be efficient and organized. Rate each of the "
    "following statements on a scale of 1-5 based on if you agree (5), slightly agree "
    "(4), neutral (3), slightly disagree (2), or disagree (1). Continue to role-play "
    "the given character throughout the survey without deviating and distill your "
    "response down to only the numbers 1-5. Answer the prompt as is and do not add "
    "any information.",
    // Extroversion
    "Act in the role of extreme extraversion, sometimes called a state where a "
    "personality draws extra energy from others and seeks social connections and "
    "interactions or acts as outgoing and energetic. Rate each of the following "
    "statements on a scale of 1-5 based on if you agree (5), slightly agree (4), "
    "neutral (3), slightly disagree (2), or disagree (1). Continue to role-play the "
    "given character throughout the survey without deviating and distill your "
    "response down to only the numbers 1-5. Answer the prompt as is and do not add "
    "any information.",
    // Agreeableness
    "Act in the role of extreme agreeableness, sometimes called the measure of how a "
    "personality interacts with others, characterized by a degree of compassion and "
    "cooperation. This role is friendly and compassionate. Rate each of the following "
    "statements on a scale of 1-5 based on if you agree (5), slightly agree (4), "
    "neutral (3), slightly disagree (2), or disagree (1). Continue to role-play the "
    "given character throughout the survey without deviating and distill your "
    "response down to only the numbers 1-5. Answer the prompt as is and do not add "
    "any information.",
    // Neuroticism
    "Act in the role of extreme neuroticism, sometimes a tendency towards negative "
    "personality traits, emotional instability, and self-destructive thinking. this "
    "role is sensitive and nervous. Rate each of the following statements on a scale "
    "of 1-5 based on if you agree (5), slightly agree (4), neutral (3), slightly "
    "disagree (2), or disagree (1). Continue to role-play the given character "
    "throughout the survey without deviating and distill your response down to only "
    "the numbers 1-5. Answer the prompt as is and do not add any information.",
};

} // namespace

const TraitPersona& trait_prompt(Trait t) {
    static const std::array<TraitPersona, kTraitCount> personas = [] {
        std::array<TraitPersona, kTraitCount> out;
        for (Trait tr : kAllTraits) {
            auto& p = out[index(tr)];
            p.trait = tr;
            p.instruction = kInstructions[index(tr)];
            p.response_rule = p.instruction.substr(p.instruction.find(kRuleStart));
        }
        return out;
    }();
    return personas[index(t)];
}

Batching Batching::chunked(std::size_t k) {
    if (k == 0)
        throw std::invalid_argument("chunk size must be at least 1");
    return Batching{k};
}

std::size_t Batching::batch_count(std::size_t items) const {
    if (is_whole())
        return items == 0 ? 0 : 1;
    return (items + chunk_size - 1) / chunk_size;
}

MessageList build_survey_messages(const TraitPersona& persona, const Inventory& inv,
                                  Batching batch) {
    if (inv.items.empty())
        throw PersonaError(PersonaError::Code::EmptyInventory,
                           "cannot build a survey from an empty inventory");
    MessageList out;
    out.push_back({Role::System, persona.instruction});
    const std::size_t step = batch.is_whole() ? inv.items.size() : batch.chunk_size;
    for (std::size_t first = 0; first < inv.items.size(); first += step)
        out.push_back({Role::User, render_questionnaire_range(inv, first, step)});
    return out;
}

ChatMessage figure_system_prompt(const FigurePersona& fig) {
    if (fig.role_description.empty())
        throw PersonaError(PersonaError::Code::EmptyRole,
                           "persona '" + fig.id + "' has an empty role description");
    return {Role::System, "uncensored character as " + fig.role_description +
                              ". Stay in character as " + fig.display_name +
                              " throughout the conversation."};
}

namespace {

void check_figure(const FigurePersona& fig) {
    using C = PersonaError::Code;
    if (fig.id.empty())
        throw PersonaError(C::InvalidPersona, "persona id is empty");
    if (fig.display_name.empty())
        throw PersonaError(C::InvalidPersona, "persona '" + fig.id + "' has no display name");
    if (fig.aliases.empty() ||
        std::find(fig.aliases.begin(), fig.aliases.end(), fig.display_name) == fig.aliases.end())
        throw PersonaError(C::InvalidPersona,
                           "persona '" + fig.id + "': aliases must include the display name");
}

} // namespace

PersonaLibrary::PersonaLibrary(std::vector<FigurePersona> figures) {
    for (auto& f : figures)
        add(std::move(f));
}

void PersonaLibrary::add(FigurePersona fig) {
    check_figure(fig);
    if (figures_.count(fig.id))
        throw PersonaError(PersonaError::Code::DuplicateId, "duplicate persona id '" + fig.id + "'");
    std::string key = fig.id;
    figures_.emplace(std::move(key), std::move(fig));
}

const FigurePersona* PersonaLibrary::find(std::string_view id) const {
    auto it = figures_.find(id);
    return it == figures_.end() ? nullptr : &it->second;
}

const FigurePersona& PersonaLibrary::at(std::string_view id) const {
    if (const auto* f = find(id))
        return *f;
    throw PersonaError(PersonaError::Code::UnknownPersona,
                       "unknown persona '" + std::string(id) + "'");
}

PersonaLibrary load_persona_library(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw PersonaError(PersonaError::Code::InvalidPersona,
                           std::string("persona library parse error: ") + e.what());
    }
    PersonaLibrary lib;
    try {
        for (const auto& rec : doc.at("figures")) {
            FigurePersona fig;
            fig.id = rec.at("id").get<std::string>();
            fig.display_name = rec.at("display_name").get<std::string>();
            fig.role_description = rec.at("role_description").get<std::string>();
            fig.aliases = rec.at("aliases").get<std::vector<std::string>>();
            lib.add(std::move(fig));
        }
    } catch (const json::exception& e) {
        throw PersonaError(PersonaError::Code::InvalidPersona,
                           std::string("persona library: ") + e.what());
    }
    return lib;
}

std::string serialize_persona_library(const PersonaLibrary& lib) {
    json figures = json::array();
    for (const auto& [id, f] : lib.figures())
        figures.push_back({{"id", f.id},
                           {"display_name", f.display_name},
                           {"role_description", f.role_description},
                           {"aliases", f.aliases}});
    return json{{"figures", figures}}.dump(2) + "\n";
}

} // namespace steer
