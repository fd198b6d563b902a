#include "pmfuse/geo.hpp"

#include <cmath>
#include <numbers>

#include "pmfuse/errors.hpp"

namespace pmfuse::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_coords(const GeoPoint& p, const char* what) {
    if (!(p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0) ||
        !std::isfinite(p.lat) || !std::isfinite(p.lon))
        throw CoordinateError(std::string(what) + " out of range: lat=" +
                              std::to_string(p.lat) + " lon=" + std::to_string(p.lon));
}

}  // namespace

ProjectedPoint project(const GeoPoint& p, const GeoPoint& ref) {
    check_coords(p, "point");
    check_coords(ref, "reference");
    double x = kEarthRadiusM * std::cos(ref.lat * kDegToRad) *
               (p.lon - ref.lon) * kDegToRad;
    double y = kEarthRadiusM * (p.lat - ref.lat) * kDegToRad;
    return ProjectedPoint{x, y};
}

GeoPoint unproject(const ProjectedPoint& p, const GeoPoint& ref) {
    check_coords(ref, "reference");
    double lat = ref.lat + p.y / kEarthRadiusM / kDegToRad;
    double coslat = std::cos(ref.lat * kDegToRad);
    double lon = ref.lon + p.x / (kEarthRadiusM * coslat) / kDegToRad;
    return GeoPoint{lat, lon};
}

void GridSpec::validate() const {
    if (!(cell_size > 0.0)) throw ValidationError("grid.cell_size_m must be > 0");
    if (n_cols <= 0 || n_rows <= 0)
        throw ValidationError("grid.n_cols / grid.n_rows must be positive");
}

std::optional<CellKey> cell_of(const ProjectedPoint& p, const GridSpec& g) {
    double fx = std::floor((p.x - g.origin.x) / g.cell_size);
    double fy = std::floor((p.y - g.origin.y) / g.cell_size);
    if (fx < 0 || fy < 0 || fx >= g.n_cols || fy >= g.n_rows) return std::nullopt;
    return CellKey{static_cast<std::int32_t>(fx), static_cast<std::int32_t>(fy)};
}

bool in_station_cell(const ProjectedPoint& p, const StationCell& c) {
    // Half-open on the max edge, closed on the min edge, both axes.
    return p.x >= c.center.x - c.half_width && p.x < c.center.x + c.half_width &&
           p.y >= c.center.y - c.half_width && p.y < c.center.y + c.half_width;
}

}  // namespace pmfuse::geo
