#include "steer/inventory.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace steer {

using nlohmann::json;

std::vector<int> Inventory::item_ids() const {
    std::vector<int> ids;
    ids.reserve(items.size());
    for (const auto& item : items)
        ids.push_back(item.id);
    return ids;
}

const Item* Inventory::find(int id) const {
    auto it = std::find_if(items.begin(), items.end(),
                           [id](const Item& i) { return i.id == id; });
    return it == items.end() ? nullptr : &*it;
}

TraitBounds trait_bounds(const Inventory& inv, Trait t) {
    int plus = 0, minus = 0;
    for (const auto& item : inv.items) {
        if (item.trait != t)
            continue;
        (item.polarity == Polarity::Positive ? plus : minus)++;
    }
    const int c = inv.trait_constants[index(t)];
    return {c + plus * inv.scale_min - minus * inv.scale_max,
            c + plus * inv.scale_max - minus * inv.scale_min};
}

std::string to_string(const Diagnostic& d) {
    std::string s = d.severity == Diagnostic::Severity::Error ? "error: " : "warning: ";
    if (!d.field.empty())
        s += d.field + ": ";
    return s + d.message;
}

const Inventory& builtin_ipip50() {
    static const Inventory inv = [] {
        Inventory v;
        v.scale_min = 1;
        v.scale_max = 5;
        v.trait_constants[index(Trait::Openness)] = 8;
        v.trait_constants[index(Trait::Conscientiousness)] = 14;
        v.trait_constants[index(Trait::Extroversion)] = 20;
        v.trait_constants[index(Trait::Agreeableness)] = 14;
        v.trait_constants[index(Trait::Neuroticism)] = 12;
        v.items = {
        {1, "Am the life of the party", Trait::Extroversion, Polarity::Positive},
        {2, "Feel little concern for others", Trait::Agreeableness, Polarity::Negative},
        {3, "Am always prepared", Trait::Conscientiousness, Polarity::Positive},
        {4, "Get stressed out easily", Trait::Neuroticism, Polarity::Positive},
        {5, "Have a rich vocabulary", Trait::Openness, Polarity::Positive},
        {6, "Don't talk a lot", Trait::Extroversion, Polarity::Negative},
        {7, "Am interested in people", Trait::Agreeableness, Polarity::Positive},
        {8, "Leave my belongings around", Trait::Conscientiousness, Polarity::Negative},
        {9, "Am relaxed most of the time", Trait::Neuroticism, Polarity::Negative},
        {10, "Have difficulty understanding abstract ideas", Trait::Openness, Polarity::Negative},
        {11, "Feel comfortable around people", Trait::Extroversion, Polarity::Positive},
        {12, "Insult people", Trait::Agreeableness, Polarity::Negative},
        {13, "Pay attention to details", Trait::Conscientiousness, Polarity::Positive},
        {14, "Worry about things", Trait::Neuroticism, Polarity::Positive},
        {15, "Have a vivid imagination", Trait::Openness, Polarity::Positive},
        {16, "Keep in the background", Trait::Extroversion, Polarity::Negative},
        {17, "Sympathize with others' feelings", Trait::Agreeableness, Polarity::Positive},
        {18, "Make a mess of things", Trait::Conscientiousness, Polarity::Negative},
        {19, "Seldom feel blue", Trait::Neuroticism, Polarity::Negative},
        {20, "Am not interested in abstract ideas", Trait::Openness, Polarity::Negative},
        {21, "Start conversations", Trait::Extroversion, Polarity::Positive},
        {22, "Am not interested in other people's problems", Trait::Agreeableness, Polarity::Negative},
        {23, "Get chores done right away", Trait::Conscientiousness, Polarity::Positive},
        {24, "Am easily disturbed", Trait::Neuroticism, Polarity::Positive},
        {25, "Have excellent ideas", Trait::Openness, Polarity::Positive},
        {26, "Have little to say", Trait::Extroversion, Polarity::Negative},
        {27, "Have a soft heart", Trait::Agreeableness, Polarity::Positive},
        {28, "Often forget to put things back in their proper place", Trait::Conscientiousness, Polarity::Negative},
        {29, "Get upset easily", Trait::Neuroticism, Polarity::Positive},
        {30, "Do not have a good imagination", Trait::Openness, Polarity::Negative},
        {31, "Talk to a lot of different people at parties", Trait::Extroversion, Polarity::Positive},
        {32, "Am not really interested in others", Trait::Agreeableness, Polarity::Negative},
        {33, "Like order", Trait::Conscientiousness, Polarity::Positive},
        {34, "Change my mood a lot", Trait::Neuroticism, Polarity::Positive},
        {35, "Am quick to understand things", Trait::Openness, Polarity::Positive},
        {36, "Don't like to draw attention to myself", Trait::Extroversion, Polarity::Negative},
        {37, "Take time out for others", Trait::Agreeableness, Polarity::Positive},
        {38, "Shirk my duties", Trait::Conscientiousness, Polarity::Negative},
        {39, "Have frequent mood swings", Trait::Neuroticism, Polarity::Positive},
        {40, "Use difficult words", Trait::Openness, Polarity::Positive},
        {41, "Don't mind being the center of attention", Trait::Extroversion, Polarity::Positive},
        {42, "Feel others' emotions", Trait::Agreeableness, Polarity::Positive},
        {43, "Follow a schedule", Trait::Conscientiousness, Polarity::Positive},
        {44, "Get irritated easily", Trait::Neuroticism, Polarity::Positive},
        {45, "Spend time reflecting on things", Trait::Openness, Polarity::Positive},
        {46, "Am quiet around strangers", Trait::Extroversion, Polarity::Negative},
        {47, "Make people feel at ease", Trait::Agreeableness, Polarity::Positive},
        {48, "Am exacting in my work", Trait::Conscientiousness, Polarity::Positive},
        {49, "Often feel blue", Trait::Neuroticism, Polarity::Positive},
        {50, "Am full of ideas", Trait::Openness, Polarity::Positive},
        };
        return v;
    }();
    return inv;
}

std::vector<Diagnostic> validate_inventory(const Inventory& inv) {
    using Sev = Diagnostic::Severity;
    std::vector<Diagnostic> out;
    if (inv.scale_min >= inv.scale_max)
        out.push_back({Sev::Error, "scale",
                       "scale min " + std::to_string(inv.scale_min) +
                           " must be below max " + std::to_string(inv.scale_max)});
    std::set<int> seen;
    TraitMap<int> per_trait{};
    for (std::size_t i = 0; i < inv.items.size(); ++i) {
        const auto& item = inv.items[i];
        const std::string field = "items[" + std::to_string(i) + "]";
        if (!seen.insert(item.id).second)
            out.push_back({Sev::Error, field + ".id",
                           "duplicate item id " + std::to_string(item.id)});
        if (item.text.empty())
            out.push_back({Sev::Error, field + ".text", "item text is empty"});
        per_trait[index(item.trait)]++;
    }
    for (Trait t : kAllTraits)
        if (per_trait[index(t)] == 0)
            out.push_back({Sev::Warning, "items",
                           std::string(trait_name(t)) +
                               " has no items; its constant is unusable"});
    return out;
}

namespace {

std::string polarity_code(Polarity p) { return p == Polarity::Positive ? "+" : "-"; }

// Maps a byte offset to "line L, column C" (1-based).
std::string locate(std::string_view doc, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < doc.size(); ++i) {
        if (doc[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

template <typename T>
T field_as(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw InventoryError(where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InventoryError(where + "." + key + ": wrong type");
    }
}

} // namespace

Inventory load_inventory(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw InventoryError("inventory parse error at " +
                             locate(document, e.byte == 0 ? 0 : e.byte - 1));
    }
    if (!doc.is_object())
        throw InventoryError("inventory document must be an object");

    Inventory inv;
    const json& scale = doc.contains("scale") ? doc["scale"] : json::object();
    inv.scale_min = scale.value("min", 1);
    inv.scale_max = scale.value("max", 5);

    if (!doc.contains("constants") || !doc["constants"].is_object())
        throw InventoryError("constants: missing; custom inventories must supply "
                             "a constant for every trait");
    TraitMap<bool> have{};
    for (const auto& [key, value] : doc["constants"].items()) {
        auto t = parse_trait(key);
        if (!t)
            throw InventoryError("constants." + key + ": unknown trait");
        if (!value.is_number_integer())
            throw InventoryError("constants." + key + ": must be an integer");
        inv.trait_constants[index(*t)] = value.get<int>();
        have[index(*t)] = true;
    }
    for (Trait t : kAllTraits)
        if (!have[index(t)])
            throw InventoryError("constants." + std::string(1, trait_letter(t)) +
                                 ": missing");

    if (!doc.contains("items") || !doc["items"].is_array())
        throw InventoryError("items: missing or not an array");
    const json& items = doc["items"];
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string where = "items[" + std::to_string(i) + "]";
        const json& rec = items[i];
        Item item;
        item.id = field_as<int>(rec, "id", where);
        item.text = field_as<std::string>(rec, "text", where);
        const auto trait = field_as<std::string>(rec, "trait", where);
        auto t = parse_trait(trait);
        if (!t)
            throw InventoryError(where + ".trait: unknown trait '" + trait + "'");
        item.trait = *t;
        const auto pol = field_as<std::string>(rec, "polarity", where);
        if (pol == "+" || pol == "positive")
            item.polarity = Polarity::Positive;
        else if (pol == "-" || pol == "negative")
            item.polarity = Polarity::Negative;
        else
            throw InventoryError(where + ".polarity: expected '+' or '-', got '" + pol + "'");
        inv.items.push_back(std::move(item));
    }

    auto diags = validate_inventory(inv);
    const bool fatal = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
        return d.severity == Diagnostic::Severity::Error;
    });
    if (fatal) {
        std::string msg = "invalid inventory";
        for (const auto& d : diags)
            msg += "\n  " + to_string(d);
        throw InventoryError(msg, std::move(diags));
    }
    return inv;
}

std::string serialize_inventory(const Inventory& inv) {
    json doc;
    doc["scale"] = {{"min", inv.scale_min}, {"max", inv.scale_max}};
    json constants = json::object();
    for (Trait t : kAllTraits)
        constants[std::string(1, trait_letter(t))] = inv.trait_constants[index(t)];
    doc["constants"] = constants;
    json items = json::array();
    for (const auto& item : inv.items)
        items.push_back({{"id", item.id},
                         {"text", item.text},
                         {"trait", std::string(1, trait_letter(item.trait))},
                         {"polarity", polarity_code(item.polarity)}});
    doc["items"] = items;
    return doc.dump(2) + "\n";
}

std::string render_questionnaire_range(const Inventory& inv, std::size_t first,
                                       std::size_t count) {
    std::ostringstream os;
    const std::size_t last = std::min(inv.items.size(), first + count);
    for (std::size_t i = first; i < last; ++i) {
        if (i != first)
            os << '\n';
        os << (i + 1) << ". " << inv.items[i].text;
    }
    return os.str();
}

std::string render_questionnaire(const Inventory& inv) {
    return render_questionnaire_range(inv, 0, inv.items.size());
}

} // namespace steer
