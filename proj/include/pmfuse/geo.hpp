#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace pmfuse::geo {

struct GeoPoint {
    double lat = 0.0;  // decimal degrees, WGS84
    double lon = 0.0;
};

struct ProjectedPoint {
    double x = 0.0;  // meters east of reference origin
    double y = 0.0;  // meters north of reference origin
};

// Local equirectangular projection around a reference point, spherical
// Earth R = 6,371,000 m. Valid within a couple of degrees of the
// reference; the study areas this pipeline targets span well under one.
inline constexpr double kEarthRadiusM = 6371000.0;

ProjectedPoint project(const GeoPoint& p, const GeoPoint& ref);
GeoPoint unproject(const ProjectedPoint& p, const GeoPoint& ref);

struct CellKey {
    std::int32_t col = 0;
    std::int32_t row = 0;

    bool operator==(const CellKey&) const = default;
    bool operator<(const CellKey& o) const {
        return row != o.row ? row < o.row : col < o.col;
    }
};

// Regular tessellation. Cells are half-open [edge, edge+size) on both axes
// so every interior point maps to exactly one cell.
struct GridSpec {
    ProjectedPoint origin;  // lower-left corner
    double cell_size = 0.0; // meters
    std::int32_t n_cols = 0;
    std::int32_t n_rows = 0;

    std::int64_t n_cells() const {
        return static_cast<std::int64_t>(n_cols) * n_rows;
    }
    std::int64_t index_of(CellKey k) const {
        return static_cast<std::int64_t>(k.row) * n_cols + k.col;
    }
    CellKey key_of(std::int64_t index) const {
        return CellKey{static_cast<std::int32_t>(index % n_cols),
                       static_cast<std::int32_t>(index / n_cols)};
    }
    ProjectedPoint cell_center(CellKey k) const {
        return ProjectedPoint{origin.x + (k.col + 0.5) * cell_size,
                              origin.y + (k.row + 0.5) * cell_size};
    }
    void validate() const;
};

// Square of side 2*half_width centered on a station (same half-open edge
// convention as grid cells). Squares may overlap each other and the grid.
struct StationCell {
    std::string station_id;
    ProjectedPoint center;
    double half_width = 0.0;
};

std::optional<CellKey> cell_of(const ProjectedPoint& p, const GridSpec& g);
bool in_station_cell(const ProjectedPoint& p, const StationCell& c);

}  // namespace pmfuse::geo
