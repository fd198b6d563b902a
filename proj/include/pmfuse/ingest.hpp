#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pmfuse/geo.hpp"

namespace pmfuse::ingest {

struct FixedRecord {
    std::string station_id;
    std::int64_t t = 0;  // seconds since epoch, UTC
    double pm25 = 0.0;   // ug/m3
};

struct MobileRecord {
    std::string device_id;
    std::int64_t t = 0;
    geo::GeoPoint pos;
    double pm25_raw = 0.0;
    double rh = 0.0;    // percent relative humidity
    double temp = 0.0;  // degrees Celsius
};

struct StationInfo {
    std::string station_id;
    geo::GeoPoint pos;
};

// One rasterized urban layer: a value for every grid cell (zero-filled).
// Valid names: building_area, land_cover.<class>, land_use.<class>,
// road_length.<class>.
struct UrbanFeatureLayer {
    std::string name;
    std::vector<double> values;  // grid.n_cells(), row-major
};

bool valid_layer_name(const std::string& name);

// Per-file ingest accounting. parsed = kept + dropped always holds;
// drop_reason_counts breaks dropped down by cause.
struct IngestReport {
    std::string file;
    std::size_t rows_parsed = 0;
    std::size_t rows_kept = 0;
    std::size_t rows_dropped = 0;
    std::map<std::string, std::size_t> drop_reason_counts;

    void drop(const std::string& reason) {
        ++rows_dropped;
        ++drop_reason_counts[reason];
    }
    std::string csv_row() const;
    static std::string csv_header();
};

// QC ranges. The concentration window applies to both streams; RH/T use the
// sensor operating range (there is no other documented bound for them, and
// the ingest report surfaces how many rows the choice removes).
bool qc_pass_fixed(const FixedRecord& r, std::string* reason = nullptr);
bool qc_pass_mobile(const MobileRecord& r, std::string* reason = nullptr);

// Streaming loaders: sink is invoked once per QC-passing record, in file
// order, without materializing the file. In strict mode a malformed row is
// fatal; in lenient mode it is counted and skipped.
IngestReport stream_fixed(const std::string& path, bool strict,
                          const std::function<void(const FixedRecord&)>& sink);
IngestReport stream_mobile(const std::string& path, bool strict,
                           const std::function<void(const MobileRecord&)>& sink);

std::vector<FixedRecord> load_fixed(const std::string& path, bool strict = false,
                                    IngestReport* report = nullptr);
std::vector<MobileRecord> load_mobile(const std::string& path, bool strict = false,
                                      IngestReport* report = nullptr);
std::vector<StationInfo> load_stations(const std::string& path);

// Feature inputs prior to rasterization. Geometry coordinates are WGS84
// lat/lon like every other input file; rects are axis-aligned in the local
// projection (the equirectangular projection keeps lat/lon-aligned boxes
// axis-aligned).
struct RectGeom {
    std::string layer;
    geo::GeoPoint a, b;  // opposite corners
};
struct PolylineGeom {
    std::string layer;
    std::vector<geo::GeoPoint> pts;
};
struct PerCellValue {
    std::string layer;
    geo::CellKey cell;
    double value = 0.0;
};
struct FeatureInputs {
    std::vector<RectGeom> rects;
    std::vector<PolylineGeom> polylines;
    std::vector<PerCellValue> per_cell;
};

// Reads either schema, detected from the header: `layer,col,row,value` or
// `layer,kind,coords...` with kind in {rect, polyline}.
FeatureInputs load_features(const std::string& path);

// Area of intersection per cell for rects, clipped length per cell for
// polylines, direct fill for per-cell tables. Layers are returned sorted by
// name; every declared layer covers every cell (zero-filled).
std::vector<UrbanFeatureLayer> rasterize_features(const FeatureInputs& inputs,
                                                  const geo::GridSpec& grid,
                                                  const geo::GeoPoint& ref);

// Length of segment a-b inside the half-open box [xmin,xmax) x [ymin,ymax).
// Exposed for the clipping-conservation tests.
double clip_segment_length(const geo::ProjectedPoint& a, const geo::ProjectedPoint& b,
                           double xmin, double xmax, double ymin, double ymax);

}  // namespace pmfuse::ingest
