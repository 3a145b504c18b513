#ifndef FDF_KERNEL_GEOMETRY_HPP
#define FDF_KERNEL_GEOMETRY_HPP

#include <map>
#include <string>
#include <vector>

#include "fdf/errors.hpp"

namespace fdf {

inline constexpr int kLevelCount = 9;
inline constexpr int kDefaultCellCount = 9;

// One of the nine discrete equilibrium configurations. Index 0 is the most
// scattered filter (e = 1, n = 1); index 8 is the normal contiguous 3x3
// filter (e = 0, n = -1).
struct EquilibriumLevel {
    int index = 8;

    double value() const { return 1.0 - index / 8.0; }    // e in [0, 1]
    double scaled_n() const { return 2.0 * value() - 1.0; }  // n in [-1, 1]

    static EquilibriumLevel from_index(int idx);

    bool operator==(const EquilibriumLevel& o) const { return index == o.index; }
};

// Integer grid offset of a filter cell relative to the anchor pixel.
struct GridOffset {
    int row = 0;
    int col = 0;
    bool operator==(const GridOffset& o) const { return row == o.row && col == o.col; }
};

// Parameters of the spiral family R(theta) = theta^(alpha*n) / beta over
// theta in [theta0, 2*k*pi]. beta is derived per level so the spiral fits
// the level's radius budget.
struct SpiralParams {
    double alpha = 0.1;      // radius exponent scale, in (0, 1)
    int turns = 3;           // k, number of spiral turns
    int cell_count = kDefaultCellCount;
    int theta_samples = 360;
    // level index -> max radius; levels absent from the map fall back to
    // the default schedule r_max(e) = 1 + 3e.
    std::map<int, double> r_max_schedule;

    double r_max(const EquilibriumLevel& level) const;
    void validate() const;
};

// A floating discrete filter: cell_count unique offsets including (0,0),
// all inside the centered extent x extent box.
struct FilterSpec {
    EquilibriumLevel level;
    std::vector<GridOffset> offsets;
    int extent = 0;

    void validate() const;
    bool contains(int row, int col) const;
};

// One continuous sample of the spiral f(theta) = R(theta) e^{j theta}.
struct SpiralPoint {
    double theta = 0;
    double radius = 0;
    double x = 0;  // R * cos(theta)
    double y = 0;  // R * sin(theta)
};

// R(theta) = theta^(alpha*n) / beta. theta must be positive.
double spiral_radius(double theta, double n, double alpha, double beta);

// Continuous spiral samples for a scaled equilibrium value n, normalized so
// max radius equals r_max. Used for filter generation and Fig.-2-style CSVs.
std::vector<SpiralPoint> spiral_points(double n, const SpiralParams& params, double r_max);

// Default radius budget for a continuous equilibrium value e in [0, 1].
double default_r_max(double e);

// Smallest odd s such that all offsets fit the centered s x s box.
int extent_of(const std::vector<GridOffset>& offsets);

// Map an equilibrium level to a filter shape. Level 8 bypasses the spiral
// and returns the contiguous 3x3 filter; other levels rasterize the spiral,
// deduplicate cells in theta order, make sure the center is present, and
// keep the first cell_count cells. Throws GenerationError when the sampling
// density cannot supply cell_count distinct cells.
FilterSpec generate_filter(const EquilibriumLevel& level, const SpiralParams& params);

// Text format: `level <index> cells <count> extent <s>` header, then one
// `<row> <col>` pair per line; '#' starts a comment. Multiple blocks per
// file, one per level.
std::map<int, FilterSpec> load_filter_specs(const std::string& path);
void save_filter_specs(const std::map<int, FilterSpec>& specs, const std::string& path);
std::string format_filter_spec(const FilterSpec& spec);

double mean_offset_norm(const FilterSpec& spec);

}  // namespace fdf

#endif
