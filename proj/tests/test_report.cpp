#include "steer/report.hpp"

#include <doctest.h>

#include <cmath>
#include <regex>

using namespace steer;

namespace {

const int kPublished[5][5] = {
    {37, 25, 38, 38, 25}, {33, 39, 18, 25, 25}, {33, 25, 37, 37, 24}, {30, 33, 34, 38, 18}, {25, 22, 11, 21, 45},
};

AlignmentMatrix published() {
    AlignmentMatrix m;
    for (std::size_t p = 0; p < 5; ++p)
        for (std::size_t s = 0; s < 5; ++s)
            m.cells[p][s] = kPublished[p][s];
    return m;
}

double dist(const RadarSpec& spec, Point p) { return std::hypot(p.x - spec.cx(), p.y - spec.cy()); }

} // namespace

TEST_CASE("radar axis layout") {
    CHECK(axis_angle_degrees(Trait::Openness) == 90.0);
    CHECK(axis_angle_degrees(Trait::Conscientiousness) == 162.0);
    CHECK(axis_angle_degrees(Trait::Extroversion) == 234.0);
    CHECK(axis_angle_degrees(Trait::Agreeableness) == 306.0);
    CHECK(axis_angle_degrees(Trait::Neuroticism) == 18.0);

    RadarSpec spec;
    const auto top = radar_vertices(spec, {1, 0, 0, 0, 0})[0];
    CHECK(top.x == doctest::Approx(spec.cx()));
    CHECK(top.y == doctest::Approx(spec.cy() - spec.radius));
    // C sits counterclockwise from O, so to the left of centre.
    CHECK(radar_vertices(spec, {0, 1, 0, 0, 0})[1].x < spec.cx());
}

TEST_CASE("radar vertices for uniform series") {
    RadarSpec spec;
    for (double v : {1.0, 0.5, 0.25, 0.0}) {
        const auto pts = radar_vertices(spec, {v, v, v, v, v});
        for (const auto& p : pts)
            CHECK(std::abs(dist(spec, p) - v * spec.radius) <= 1e-9);
        if (v > 0) {
            // Regular pentagon: equal sides.
            const double side = std::hypot(pts[0].x - pts[1].x, pts[0].y - pts[1].y);
            for (std::size_t i = 0; i < 5; ++i) {
                const auto& a = pts[i];
                const auto& b = pts[(i + 1) % 5];
                CHECK(std::hypot(a.x - b.x, a.y - b.y) == doctest::Approx(side));
            }
        }
    }
}

TEST_CASE("radar SVG") {
    const auto metrics = steerability_metrics(published());
    const auto spec = radar_from_metrics(metrics);
    REQUIRE(spec.series.size() == 5);
    // The N-prompt polygon's farthest vertex is on the N axis.
    const auto pts = radar_vertices(spec, spec.series[index(Trait::Neuroticism)].values);
    std::size_t far = 0;
    for (std::size_t i = 1; i < 5; ++i)
        if (dist(spec, pts[i]) > dist(spec, pts[far]))
            far = i;
    CHECK(far == index(Trait::Neuroticism));

    const std::string svg = radar_svg(spec);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("version=\"1.1\"") != std::string::npos);
    CHECK(svg.find("<!-- axis normalization") != std::string::npos);
    CHECK(svg.find("N [10,50]") != std::string::npos);
    const std::regex polygon("<polygon data-label=");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), polygon), std::sregex_iterator()) == 5);
    CHECK(radar_svg(spec) == svg);

    RadarSpec bad;
    bad.series.push_back({"x", {1.5, 0, 0, 0, 0}, ""});
    CHECK_THROWS_AS(radar_svg(bad), std::invalid_argument);
    RadarSpec escaped;
    escaped.series.push_back({"a<b & c", {0, 0, 0, 0, 0}, ""});
    CHECK(radar_svg(escaped).find("a&lt;b &amp; c") != std::string::npos);
}

TEST_CASE("matrix CSV") {
    const std::string csv = matrix_csv(published());
    CHECK(csv ==
          "prompted\\scored,O,C,E,A,N\n"
          "O,37,25,38,38,25\n"
          "C,33,39,18,25,25\n"
          "E,33,25,37,37,24\n"
          "A,30,33,34,38,18\n"
          "N,25,22,11,21,45\n");
    CHECK(parse_matrix_csv(csv) == published());

    AlignmentMatrix neutral;
    for (Trait t : kAllTraits)
        neutral.cells[index(t)] = {20, 20, 20, 20, 30};
    const std::string n = matrix_csv(neutral);
    CHECK(n.find("O,20,20,20,20,30\nC,20,20,20,20,30\nE,20,20,20,20,30") != std::string::npos);

    CHECK_THROWS(parse_matrix_csv("O,C,E,A,N\n"));
    CHECK_THROWS(parse_matrix_csv("prompted\\scored,O,C,E,A,N\nO,1,2,3,4,x\n"));
    CHECK_THROWS(parse_matrix_csv("prompted\\scored,O,C,E,A,N\nO,1,2,3,4,5\n"));
    CHECK(parse_scores_csv("prompted\\scored,O,C,E,A,N\nN,25,22,11,21,45\n").size() == 1);
}

TEST_CASE("markdown report sections") {
    RunArtifacts run;
    run.manifest.kind = "ocean";
    run.manifest.backend_identity = "replay:test";
    run.manifest.conditions = {kAllTraits.begin(), kAllTraits.end()};
    for (Trait t : kAllTraits) {
        ConditionResult c;
        c.condition = t;
        c.request_tags = {std::string("ocean/") + trait_letter(t)};
        c.scores = published().cells[index(t)];
        run.conditions.push_back(c);
    }
    run.matrix = published();
    run.metrics = steerability_metrics(*run.matrix);
    const std::string md = run_report(run);
    CHECK(md.find("## Configuration") != std::string::npos);
    CHECK(md.find("## Alignment matrix") != std::string::npos);
    CHECK(md.find("Deltas: O:-1 C:+6 E:0 A:+4 N:+20") != std::string::npos);
    CHECK(md.find("inclusive 4/5") != std::string::npos);
    CHECK(md.find("strict 3/5") != std::string::npos);
    CHECK(md.find("All conditions parsed.") != std::string::npos);
    CHECK(run_report(run) == md);

    run.conditions[3].scores.reset();
    run.conditions[3].parse_failure = ParseFailure{"ocean/A", ParseError::Code::OutOfScale, "", 0, 0, "7", 42};
    run.matrix.reset();
    run.metrics.reset();
    const std::string failed = run_report(run);
    CHECK(failed.find("- A (ocean/A): OutOfScale, token \"7\" at position 42") != std::string::npos);
    CHECK(failed.find("Not computed") != std::string::npos);

    RunArtifacts dlg;
    dlg.manifest.kind = "dialogue";
    DialogueResult d;
    d.transcript.id = "x";
    d.fidelity.drift_events.resize(2);
    d.fidelity.mean_mirroring = 0.125;
    dlg.dialogue = d;
    const std::string dmd = run_report(dlg);
    CHECK(dmd.find("| drift events | 2 |") != std::string::npos);
    CHECK(dmd.find("| mean mirroring (3-gram Jaccard) | 0.1250 |") != std::string::npos);
}
