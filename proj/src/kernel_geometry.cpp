#include "fdf/kernel_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fdf {

EquilibriumLevel EquilibriumLevel::from_index(int idx) {
    if (idx < 0 || idx >= kLevelCount)
        throw ConfigError("equilibrium level index out of range [0,8]: " + std::to_string(idx));
    return EquilibriumLevel{idx};
}

double SpiralParams::r_max(const EquilibriumLevel& level) const {
    auto it = r_max_schedule.find(level.index);
    if (it != r_max_schedule.end()) return it->second;
    return default_r_max(level.value());
}

double default_r_max(double e) {
    return 1.0 + 3.0 * e;
}

void SpiralParams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("spiral alpha must be in (0,1)");
    if (turns < 1) throw ConfigError("spiral turns must be positive");
    if (cell_count < 1) throw ConfigError("cell_count must be >= 1");
    if (theta_samples < cell_count)
        throw ConfigError("theta_samples must be >= cell_count");
    for (const auto& [idx, r] : r_max_schedule) {
        if (idx < 0 || idx >= kLevelCount)
            throw ConfigError("r_max_schedule has level index out of range: " + std::to_string(idx));
        if (!(r > 0.0)) throw ConfigError("r_max must be positive");
    }
}

void FilterSpec::validate() const {
    if (offsets.empty()) throw ConfigError("filter spec has no offsets");
    if (extent < 1 || extent % 2 == 0)
        throw ConfigError("filter extent must be odd and positive");
    const int half = (extent - 1) / 2;
    std::set<std::pair<int, int>> seen;
    bool has_center = false;
    for (const auto& off : offsets) {
        if (!seen.insert({off.row, off.col}).second)
            throw ConfigError("duplicate filter offset (" + std::to_string(off.row) + "," +
                              std::to_string(off.col) + ")");
        if (std::max(std::abs(off.row), std::abs(off.col)) > half)
            throw ConfigError("filter offset outside extent box");
        if (off.row == 0 && off.col == 0) has_center = true;
    }
    if (!has_center) throw ConfigError("filter spec is missing the center cell (0,0)");
}

bool FilterSpec::contains(int row, int col) const {
    return std::any_of(offsets.begin(), offsets.end(),
                       [&](const GridOffset& o) { return o.row == row && o.col == col; });
}

double spiral_radius(double theta, double n, double alpha, double beta) {
    if (!(theta > 0.0))
        throw std::domain_error("spiral_radius requires theta > 0");
    if (!(beta > 0.0))
        throw std::domain_error("spiral_radius requires beta > 0");
    return std::pow(theta, alpha * n) / beta;
}

std::vector<SpiralPoint> spiral_points(double n, const SpiralParams& params, double r_max) {
    params.validate();
    if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");

    const int count = params.theta_samples;
    const double theta_hi = 2.0 * params.turns * M_PI;
    const double theta_0 = theta_hi / count;  // keeps theta^(alpha*n) finite for n < 0
    const double step = (theta_hi - theta_0) / (count - 1);

    // Normalize so the largest sampled radius equals r_max.
    double peak = 0.0;
    for (int i = 0; i < count; ++i) {
        const double theta = theta_0 + step * i;
        peak = std::max(peak, std::pow(theta, params.alpha * n));
    }
    const double beta = peak / r_max;

    std::vector<SpiralPoint> points(count);
    for (int i = 0; i < count; ++i) {
        const double theta = theta_0 + step * i;
        const double radius = spiral_radius(theta, n, params.alpha, beta);
        points[i] = {theta, radius, radius * std::cos(theta), radius * std::sin(theta)};
    }
    return points;
}

int extent_of(const std::vector<GridOffset>& offsets) {
    if (offsets.empty()) throw ConfigError("extent_of requires non-empty offsets");
    int half = 0;
    for (const auto& off : offsets)
        half = std::max({half, std::abs(off.row), std::abs(off.col)});
    return 2 * half + 1;
}

static FilterSpec normal_filter(const EquilibriumLevel& level) {
    FilterSpec spec;
    spec.level = level;
    for (int r = -1; r <= 1; ++r)
        for (int c = -1; c <= 1; ++c) spec.offsets.push_back({r, c});
    spec.extent = 3;
    return spec;
}

FilterSpec generate_filter(const EquilibriumLevel& level, const SpiralParams& params) {
    params.validate();
    if (level.index == kLevelCount - 1) {
        // e = 0: the design collapses to the normal contiguous filter.
        FilterSpec spec = normal_filter(level);
        if (params.cell_count != static_cast<int>(spec.offsets.size()))
            throw GenerationError("level 8 normal filter has 9 cells; cell_count=" +
                                  std::to_string(params.cell_count) + " is not satisfiable");
        return spec;
    }

    const auto points = spiral_points(level.scaled_n(), params, params.r_max(level));

    // Rasterize and deduplicate in theta order, keeping first occurrences.
    std::vector<GridOffset> cells;
    std::set<std::pair<int, int>> seen;
    for (const auto& p : points) {
        const int row = static_cast<int>(std::lround(p.y));
        const int col = static_cast<int>(std::lround(p.x));
        if (seen.insert({row, col}).second) cells.push_back({row, col});
    }
    if (!seen.count({0, 0})) cells.insert(cells.begin(), GridOffset{0, 0});

    if (static_cast<int>(cells.size()) < params.cell_count)
        throw GenerationError(
            "level " + std::to_string(level.index) + " yields only " +
            std::to_string(cells.size()) + " distinct cells (need " +
            std::to_string(params.cell_count) + "); raise theta_samples or r_max");

    // Truncate to cell_count, never dropping the center.
    std::size_t center_pos = 0;
    while (!(cells[center_pos].row == 0 && cells[center_pos].col == 0)) ++center_pos;

    FilterSpec spec;
    spec.level = level;
    if (center_pos < static_cast<std::size_t>(params.cell_count)) {
        spec.offsets.assign(cells.begin(), cells.begin() + params.cell_count);
    } else {
        spec.offsets.assign(cells.begin(), cells.begin() + params.cell_count - 1);
        spec.offsets.push_back(GridOffset{0, 0});
    }
    spec.extent = extent_of(spec.offsets);
    spec.validate();
    return spec;
}

double mean_offset_norm(const FilterSpec& spec) {
    double total = 0.0;
    for (const auto& off : spec.offsets) total += std::hypot(off.row, off.col);
    return total / static_cast<double>(spec.offsets.size());
}

std::string format_filter_spec(const FilterSpec& spec) {
    std::ostringstream out;
    out << "level " << spec.level.index << " cells " << spec.offsets.size() << " extent "
        << spec.extent << "\n";
    for (const auto& off : spec.offsets) out << off.row << " " << off.col << "\n";
    return out.str();
}

void save_filter_specs(const std::map<int, FilterSpec>& specs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataFormatError("cannot open filter spec file for writing: " + path);
    out << "# floating discrete filter shapes\n";
    for (const auto& [idx, spec] : specs) out << format_filter_spec(spec);
}

std::map<int, FilterSpec> load_filter_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open filter spec file: " + path);

    auto fail = [&path](int line_no, const std::string& msg) -> void {
        throw DataFormatError(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    std::map<int, FilterSpec> specs;
    FilterSpec current;
    int declared_cells = 0;
    int header_line = 0;
    bool in_block = false;

    auto close_block = [&] {
        if (!in_block) return;
        if (static_cast<int>(current.offsets.size()) != declared_cells)
            fail(header_line, "level " + std::to_string(current.level.index) + " declares " +
                                  std::to_string(declared_cells) + " cells but lists " +
                                  std::to_string(current.offsets.size()));
        try {
            current.validate();
        } catch (const ConfigError& e) {
            fail(header_line, e.what());
        }
        if (specs.count(current.level.index))
            fail(header_line, "level " + std::to_string(current.level.index) + " declared twice");
        specs.emplace(current.level.index, current);
        in_block = false;
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::string first;
        if (!(row >> first)) continue;  // blank

        if (first == "level") {
            close_block();
            int idx = -1, cells = 0, extent = 0;
            std::string kw_cells, kw_extent;
            if (!(row >> idx >> kw_cells >> cells >> kw_extent >> extent) ||
                kw_cells != "cells" || kw_extent != "extent")
                fail(line_no, "malformed header; expected `level <i> cells <n> extent <s>`");
            std::string extra;
            if (row >> extra) fail(line_no, "trailing tokens after header");
            if (idx < 0 || idx >= kLevelCount) fail(line_no, "level index out of range [0,8]");
            current = FilterSpec{};
            current.level = EquilibriumLevel::from_index(idx);
            current.extent = extent;
            declared_cells = cells;
            header_line = line_no;
            in_block = true;
            continue;
        }

        if (!in_block) fail(line_no, "offset row before any `level` header");
        int r = 0, c = 0;
        std::istringstream pair_row(line);
        if (!(pair_row >> r >> c)) fail(line_no, "malformed offset row; expected `<row> <col>`");
        std::string extra;
        if (pair_row >> extra) fail(line_no, "trailing tokens after offset pair");
        for (const auto& off : current.offsets)
            if (off.row == r && off.col == c)
                fail(line_no,
                     "duplicate offset (" + std::to_string(r) + "," + std::to_string(c) + ")");
        current.offsets.push_back({r, c});
    }
    close_block();
    if (specs.empty()) throw DataFormatError(path + ": no filter specs found");
    return specs;
}

}  // namespace fdf
