#include "steer/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace steer {

namespace {

const std::array<const char*, 5> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

std::string num(double v) {
    if (v == 0.0)
        v = 0.0;  // folds -0
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-')
        s.erase(0, 1);
    return s;
}

std::string signed_int(int v) { return v > 0 ? "+" + std::to_string(v) : std::to_string(v); }

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string points_attr(const std::array<Point, 5>& pts) {
    std::string s;
    for (const auto& p : pts) {
        if (!s.empty())
            s += ' ';
        s += num(p.x) + "," + num(p.y);
    }
    return s;
}

} // namespace

void RadarSpec::validate() const {
    if (!(width > 0) || !(height > 0) || !(radius > 0))
        throw std::invalid_argument("radar canvas dimensions must be positive");
    if (rings < 0)
        throw std::invalid_argument("radar ring count must not be negative");
    for (const auto& s : series)
        for (Trait t : kAllTraits) {
            const double v = s.values[index(t)];
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("radar value for " + std::string(1, trait_letter(t)) +
                                            " in series '" + s.label + "' is outside [0,1]");
        }
}

double axis_angle_degrees(Trait t) {
    return std::fmod(90.0 + 72.0 * static_cast<double>(index(t)), 360.0);
}

std::array<Point, 5> radar_vertices(const RadarSpec& spec, const TraitMap<double>& values) {
    std::array<Point, 5> pts;
    for (Trait t : kAllTraits) {
        const double theta = axis_angle_degrees(t) * std::numbers::pi / 180.0;
        const double r = values[index(t)] * spec.radius;
        pts[index(t)] = {spec.cx() + r * std::cos(theta), spec.cy() - r * std::sin(theta)};
    }
    return pts;
}

std::string radar_svg(const RadarSpec& spec) {
    spec.validate();
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(spec.width)
       << "\" height=\"" << num(spec.height) << "\" viewBox=\"0 0 " << num(spec.width) << ' '
       << num(spec.height) << "\">\n";
    if (spec.bounds) {
        os << "<!-- axis normalization: value = (score - min) / (max - min);";
        for (Trait t : kAllTraits) {
            const auto& b = (*spec.bounds)[index(t)];
            os << ' ' << trait_letter(t) << " [" << b.min << ',' << b.max << ']';
        }
        os << " -->\n";
    }
    if (!spec.title.empty())
        os << "<title>" << xml_escape(spec.title) << "</title>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

    os << "<g class=\"grid\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\">\n";
    for (int ring = 1; ring <= spec.rings; ++ring) {
        const double v = static_cast<double>(ring) / spec.rings;
        os << "<polygon points=\"" << points_attr(radar_vertices(spec, {v, v, v, v, v})) << "\"/>\n";
    }
    os << "</g>\n";

    const auto outer = radar_vertices(spec, {1, 1, 1, 1, 1});
    const auto label_at = radar_vertices(spec, {1.12, 1.12, 1.12, 1.12, 1.12});
    os << "<g class=\"axes\" stroke=\"#888888\" stroke-width=\"1\">\n";
    for (Trait t : kAllTraits) {
        const auto& p = outer[index(t)];
        os << "<line x1=\"" << num(spec.cx()) << "\" y1=\"" << num(spec.cy()) << "\" x2=\"" << num(p.x)
           << "\" y2=\"" << num(p.y) << "\"/>\n";
    }
    os << "</g>\n";
    os << "<g class=\"labels\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
          "fill=\"#222222\">\n";
    for (Trait t : kAllTraits) {
        const auto& p = label_at[index(t)];
        os << "<text x=\"" << num(p.x) << "\" y=\"" << num(p.y + 4) << "\">"
           << xml_escape(trait_name(t)) << "</text>\n";
    }
    os << "</g>\n";

    os << "<g class=\"series\" stroke-width=\"2\">\n";
    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const std::string color = s.color.empty() ? kPalette[i % kPalette.size()] : s.color;
        os << "<polygon data-label=\"" << xml_escape(s.label) << "\" points=\""
           << points_attr(radar_vertices(spec, s.values)) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.12\" stroke=\"" << color << "\"/>\n";
    }
    os << "</g>\n";

    if (!spec.series.empty()) {
        os << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">\n";
        for (std::size_t i = 0; i < spec.series.size(); ++i) {
            const auto& s = spec.series[i];
            const std::string color = s.color.empty() ? kPalette[i % kPalette.size()] : s.color;
            const double y = 16.0 + 18.0 * static_cast<double>(i);
            os << "<rect x=\"10\" y=\"" << num(y - 10) << "\" width=\"12\" height=\"12\" fill=\"" << color
               << "\"/>\n";
            os << "<text x=\"28\" y=\"" << num(y) << "\">" << xml_escape(s.label) << "</text>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

RadarSpec radar_from_metrics(const SteerabilityMetrics& metrics) {
    RadarSpec spec;
    spec.bounds = metrics.bounds;
    spec.title = "OCEAN scores per prompted trait";
    for (Trait t : kAllTraits) {
        RadarSeries s;
        s.label = std::string(trait_name(t)) + " prompt";
        s.values = metrics.normalized[index(t)];
        spec.series.push_back(std::move(s));
    }
    return spec;
}

// ---- CSV --------------------------------------------------------------------

std::string scores_csv(const std::vector<std::pair<Trait, TraitScores>>& rows) {
    std::string out = "prompted\\scored";
    for (Trait t : kAllTraits)
        out += "," + std::string(1, trait_letter(t));
    out += '\n';
    for (const auto& [prompted, scores] : rows) {
        out += trait_letter(prompted);
        for (Trait t : kAllTraits)
            out += "," + std::to_string(scores[index(t)]);
        out += '\n';
    }
    return out;
}

std::string matrix_csv(const AlignmentMatrix& m) {
    std::vector<std::pair<Trait, TraitScores>> rows;
    for (Trait t : kAllTraits)
        rows.emplace_back(t, m.cells[index(t)]);
    return scores_csv(rows);
}

std::vector<std::pair<Trait, TraitScores>> parse_scores_csv(std::string_view csv) {
    std::istringstream in{std::string(csv)};
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cur;
        for (char c : l) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        cells.push_back(cur);
        return cells;
    };
    if (!std::getline(in, line))
        throw std::invalid_argument("matrix CSV is empty");
    const auto header = split(line);
    if (header.size() != 6 || header[0] != "prompted\\scored")
        throw std::invalid_argument("matrix CSV header must be prompted\\scored,O,C,E,A,N");
    for (Trait t : kAllTraits)
        if (header[index(t) + 1] != std::string(1, trait_letter(t)))
            throw std::invalid_argument("matrix CSV header must be prompted\\scored,O,C,E,A,N");

    std::vector<std::pair<Trait, TraitScores>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split(line);
        const std::string where = "matrix CSV line " + std::to_string(lineno);
        if (cells.size() != 6)
            throw std::invalid_argument(where + ": expected 6 cells");
        const auto prompted = parse_trait(cells[0]);
        if (!prompted)
            throw std::invalid_argument(where + ": unknown trait '" + cells[0] + "'");
        for (const auto& [seen, unused] : rows)
            if (seen == *prompted)
                throw std::invalid_argument(where + ": duplicate row " + cells[0]);
        TraitScores scores{};
        for (std::size_t i = 0; i < 5; ++i) {
            const auto& c = cells[i + 1];
            int v = 0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (c.empty() || res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw std::invalid_argument(where + ": '" + c + "' is not an integer");
            scores[i] = v;
        }
        rows.emplace_back(*prompted, scores);
    }
    return rows;
}

AlignmentMatrix parse_matrix_csv(std::string_view csv) {
    const auto rows = parse_scores_csv(csv);
    if (rows.size() != 5)
        throw std::invalid_argument("matrix CSV needs five rows, found " + std::to_string(rows.size()));
    AlignmentMatrix m;
    for (const auto& [prompted, scores] : rows)
        m.cells[index(prompted)] = scores;
    return m;
}

// ---- markdown report --------------------------------------------------------

std::string run_report(const RunArtifacts& run) {
    const auto& mf = run.manifest;
    std::ostringstream os;
    os << "# Run report\n\n";

    os << "## Configuration\n\n";
    os << "| field | value |\n|---|---|\n";
    os << "| kind | " << mf.kind << " |\n";
    os << "| backend | " << mf.backend_identity << " |\n";
    os << "| model | " << (mf.model.empty() ? "unset" : mf.model) << " |\n";
    os << "| temperature | " << (mf.temperature.empty() ? "unset" : mf.temperature) << " |\n";
    os << "| max_tokens | " << (mf.max_tokens.empty() ? "unset" : mf.max_tokens) << " |\n";
    if (mf.kind == "ocean") {
        os << "| inventory | " << mf.inventory_source << " |\n";
        os << "| parse policy | " << mf.parse_policy << " |\n";
        os << "| batching | " << mf.batching << " |\n";
        std::string conds;
        for (Trait t : mf.conditions)
            conds += trait_letter(t);
        os << "| conditions | " << conds << " |\n";
    }
    os << "| seed | " << mf.seed << " |\n";
    if (!mf.rescored_from.empty())
        os << "| rescored from | " << mf.rescored_from << " |\n";
    if (!mf.previous_parse_policy.empty())
        os << "| previous parse policy | " << mf.previous_parse_policy << " |\n";
    os << '\n';

    if (mf.kind == "ocean") {
        os << "## Alignment matrix\n\n";
        os << "Rows are prompted traits, columns are scored traits.\n\n";
        os << "| prompted \\ scored | O | C | E | A | N |\n|---|---|---|---|---|---|\n";
        for (const auto& c : run.conditions) {
            os << "| " << trait_letter(c.condition);
            for (Trait t : kAllTraits)
                os << " | " << (c.scores ? std::to_string((*c.scores)[index(t)]) : std::string("-"));
            os << " |\n";
        }
        os << '\n';

        os << "## Steerability\n\n";
        if (run.metrics && run.matrix) {
            const auto& m = *run.metrics;
            os << "| prompted | target score | best off-target | delta | inclusive hit | strict hit |\n";
            os << "|---|---|---|---|---|---|\n";
            for (Trait t : kAllTraits) {
                const int target = run.matrix->at(t, t);
                const int off = target - m.delta[index(t)];
                int row_max = target;
                int max_count = 0;
                for (Trait s : kAllTraits)
                    row_max = std::max(row_max, run.matrix->at(t, s));
                for (Trait s : kAllTraits)
                    max_count += run.matrix->at(t, s) == row_max;
                const bool incl = target == row_max;
                const bool strict = incl && max_count == 1;
                os << "| " << trait_letter(t) << " | " << target << " | " << off << " | "
                   << signed_int(m.delta[index(t)]) << " | " << (incl ? "yes" : "no") << " | "
                   << (strict ? "yes" : "no") << " |\n";
            }
            os << "\nArgmax hit rate: inclusive " << m.hits_inclusive << "/5 ("
               << fixed(m.argmax_hits_inclusive, 2) << "), strict " << m.hits_strict << "/5 ("
               << fixed(m.argmax_hits_strict, 2) << ").\n\n";
            os << "Deltas:";
            for (Trait t : kAllTraits)
                os << ' ' << trait_letter(t) << ':' << signed_int(m.delta[index(t)]);
            os << "\n\n";
        } else {
            os << "Not computed: the matrix needs a successful result for all five conditions.\n\n";
        }

        os << "## Text metrics\n\n";
        os << "Relevance is the embedding cosine between the questionnaire and the response.\n\n";
        os << "| condition | words | sentences | syllables | characters | fk grade | sentiment | relevance |\n";
        os << "|---|---|---|---|---|---|---|---|\n";
        for (const auto& c : run.conditions) {
            os << "| " << trait_letter(c.condition);
            if (c.text.stats) {
                const auto& s = *c.text.stats;
                os << " | " << s.words << " | " << s.sentences << " | " << s.syllables << " | "
                   << s.characters << " | " << fixed(s.fk_grade, 2);
            } else {
                os << " | - | - | - | - | -";
            }
            os << " | " << (c.text.sentiment ? fixed(c.text.sentiment->score, 3) : std::string("-"));
            os << " | " << fixed(c.text.relevance, 3) << " |\n";
        }
        os << '\n';

        os << "## Parse diagnostics\n\n";
        bool any = false;
        for (const auto& c : run.conditions) {
            if (c.parse_failure) {
                const auto& f = *c.parse_failure;
                os << "- " << trait_letter(c.condition) << " (" << f.request_tag << "): "
                   << code_name(f.code);
                if (f.code == ParseError::Code::CountMismatch)
                    os << ", found " << f.found << " of " << f.expected;
                if (f.code == ParseError::Code::OutOfScale)
                    os << ", token \"" << f.token << "\" at position " << f.position;
                os << '\n';
                any = true;
            } else if (!c.backend_error.empty()) {
                os << "- " << trait_letter(c.condition) << ": backend error: " << c.backend_error << '\n';
                any = true;
            }
        }
        if (!any)
            os << "All conditions parsed.\n";
        os << '\n';
    }

    if (run.dialogue) {
        const auto& d = *run.dialogue;
        os << "## Dialogue fidelity\n\n";
        os << "| field | value |\n|---|---|\n";
        os << "| dialogue | " << d.transcript.id << " |\n";
        os << "| personas | " << d.transcript.persona_a << ", " << d.transcript.persona_b << " |\n";
        os << "| turns | " << d.transcript.turns.size() << " |\n";
        os << "| ended by | " << end_reason_name(d.transcript.ended_by) << " |\n";
        os << "| context policy | " << describe(d.transcript.context_policy) << " |\n";
        os << "| context retries | " << d.transcript.context_retries.size() << " |\n";
        os << "| drift events | " << d.fidelity.drift_events.size() << " |\n";
        os << "| mean repetition (" << d.fidelity.ngram << "-gram Jaccard) | "
           << fixed(d.fidelity.mean_repetition, 4) << " |\n";
        os << "| mean mirroring (" << d.fidelity.ngram << "-gram Jaccard) | "
           << fixed(d.fidelity.mean_mirroring, 4) << " |\n";
        os << "| shuffled-control mean mirroring (seed " << d.fidelity.shuffle_seed << ") | "
           << fixed(d.fidelity.shuffled_mean_mirroring, 4) << " |\n";
        if (!d.transcript.error.empty())
            os << "| error | " << d.transcript.error << " |\n";
        os << '\n';
        if (!d.fidelity.drift_events.empty()) {
            os << "### Drift events\n\n";
            os << "| turn | speaker | asserted | evidence |\n|---|---|---|---|\n";
            for (const auto& e : d.fidelity.drift_events)
                os << "| " << e.turn_index << " | " << e.expected_persona_id << " | "
                   << e.asserted_persona_id << " | " << e.evidence << " |\n";
            os << '\n';
        }
    }
    return os.str();
}

} // namespace steer
