#pragma once

#include "steer/artifacts.hpp"
#include "steer/scorer.hpp"
#include "steer/trait.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

struct RadarSeries {
    std::string label;
    TraitMap<double> values{};  // normalized, in [0, 1]
    std::string color;          // empty picks from the default palette
};

struct RadarSpec {
    std::vector<RadarSeries> series;
    double width = 560;
    double height = 520;
    double radius = 180;
    int rings = 4;
    std::optional<TraitMap<TraitBounds>> bounds;  // emitted as a comment
    std::string title;

    void validate() const;  // throws std::invalid_argument
    double cx() const { return width / 2; }
    double cy() const { return height / 2; }
};

struct Point {
    double x = 0;
    double y = 0;
};

// Degrees, counterclockwise from the positive x axis: O 90, C 162, E 234,
// A 306, N 18.
double axis_angle_degrees(Trait t);
std::array<Point, 5> radar_vertices(const RadarSpec& spec, const TraitMap<double>& values);
std::string radar_svg(const RadarSpec& spec);

// One series per prompted trait from the normalized matrix.
RadarSpec radar_from_metrics(const SteerabilityMetrics& metrics);

// Header "prompted\scored,O,C,E,A,N" then one integer row per condition.
std::string matrix_csv(const AlignmentMatrix& m);
std::string scores_csv(const std::vector<std::pair<Trait, TraitScores>>& rows);
AlignmentMatrix parse_matrix_csv(std::string_view csv);
std::vector<std::pair<Trait, TraitScores>> parse_scores_csv(std::string_view csv);

std::string run_report(const RunArtifacts& run);

} // namespace steer
