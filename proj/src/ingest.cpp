#include "pmfuse/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::ingest {

namespace {

// Chunked line reader; avoids istream overhead on multi-GB inputs.
class LineReader {
public:
    explicit LineReader(const std::string& path) : file_(std::fopen(path.c_str(), "rb")) {
        if (!file_) throw ValidationError("cannot open file: " + path);
        buf_.resize(1 << 20);
    }
    ~LineReader() {
        if (file_) std::fclose(file_);
    }
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    // Returns false at EOF. The returned view is valid until the next call.
    bool next(std::string_view& line) {
        while (true) {
            const char* nl = static_cast<const char*>(
                std::memchr(buf_.data() + pos_, '\n', fill_ - pos_));
            if (nl) {
                std::size_t len = static_cast<std::size_t>(nl - (buf_.data() + pos_));
                line = std::string_view(buf_.data() + pos_, len);
                pos_ += len + 1;
                if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
                return true;
            }
            // Shift the partial tail to the front and refill.
            std::size_t tail = fill_ - pos_;
            if (tail > 0) std::memmove(buf_.data(), buf_.data() + pos_, tail);
            pos_ = 0;
            fill_ = tail;
            if (fill_ == buf_.size()) buf_.resize(buf_.size() * 2);
            std::size_t got = std::fread(buf_.data() + fill_, 1, buf_.size() - fill_, file_);
            if (got == 0) {
                if (fill_ == 0) return false;
                line = std::string_view(buf_.data(), fill_);
                if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
                pos_ = fill_ = 0;
                return true;
            }
            fill_ += got;
        }
    }

private:
    std::FILE* file_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::size_t fill_ = 0;
};

[[noreturn]] void malformed(const std::string& path, std::size_t lineno,
                            const std::string& what) {
    throw DataError(path + ":" + std::to_string(lineno) + ": malformed row (" +
                    what + ")");
}

}  // namespace

bool valid_layer_name(const std::string& name) {
    if (name == "building_area") return true;
    for (const char* prefix : {"land_cover.", "land_use.", "road_length."}) {
        std::size_t n = std::strlen(prefix);
        if (name.size() > n && name.compare(0, n, prefix) == 0) return true;
    }
    return false;
}

std::string IngestReport::csv_header() {
    return "file,rows_parsed,rows_kept,rows_dropped,drop_reason_counts";
}

std::string IngestReport::csv_row() const {
    std::ostringstream ss;
    ss << file << ',' << rows_parsed << ',' << rows_kept << ',' << rows_dropped << ',';
    bool first = true;
    for (const auto& [reason, count] : drop_reason_counts) {
        if (!first) ss << ';';
        ss << reason << ':' << count;
        first = false;
    }
    return ss.str();
}

bool qc_pass_fixed(const FixedRecord& r, std::string* reason) {
    if (!(r.pm25 >= 0.0 && r.pm25 <= 500.0)) {
        if (reason) *reason = "pm25_range";
        return false;
    }
    if (r.t <= 0) {
        if (reason) *reason = "timestamp_range";
        return false;
    }
    return true;
}

bool qc_pass_mobile(const MobileRecord& r, std::string* reason) {
    if (!(r.pm25_raw >= 0.0 && r.pm25_raw <= 500.0)) {
        if (reason) *reason = "pm25_range";
        return false;
    }
    if (!(r.rh >= 0.0 && r.rh <= 100.0)) {
        if (reason) *reason = "rh_range";
        return false;
    }
    if (!(r.temp >= -10.0 && r.temp <= 60.0)) {
        if (reason) *reason = "temp_range";
        return false;
    }
    if (!(r.pos.lat >= -90.0 && r.pos.lat <= 90.0 && r.pos.lon >= -180.0 &&
          r.pos.lon <= 180.0)) {
        if (reason) *reason = "coord_range";
        return false;
    }
    if (r.t <= 0) {
        if (reason) *reason = "timestamp_range";
        return false;
    }
    return true;
}

IngestReport stream_fixed(const std::string& path, bool strict,
                          const std::function<void(const FixedRecord&)>& sink) {
    LineReader reader(path);
    IngestReport rep;
    rep.file = path;
    std::string_view line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line != "station_id,timestamp,pm25")
                throw DataError(path + ": unexpected fixed CSV header: " +
                                std::string(line));
            continue;
        }
        ++rep.rows_parsed;
        auto fields = split_view(line, ',');
        if (fields.size() != 3) {
            if (strict) malformed(path, lineno, "expected 3 fields");
            rep.drop("malformed");
            continue;
        }
        auto t = parse_iso8601_utc(fields[1]);
        auto pm = parse_double(fields[2]);
        if (fields[0].empty() || !t || !pm) {
            if (strict) malformed(path, lineno, "bad field");
            rep.drop("malformed");
            continue;
        }
        FixedRecord rec{std::string(fields[0]), *t, *pm};
        std::string reason;
        if (!qc_pass_fixed(rec, &reason)) {
            rep.drop(reason);
            continue;
        }
        ++rep.rows_kept;
        sink(rec);
    }
    return rep;
}

IngestReport stream_mobile(const std::string& path, bool strict,
                           const std::function<void(const MobileRecord&)>& sink) {
    LineReader reader(path);
    IngestReport rep;
    rep.file = path;
    std::string_view line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line != "device_id,timestamp,lat,lon,pm25,rh,temp")
                throw DataError(path + ": unexpected mobile CSV header: " +
                                std::string(line));
            continue;
        }
        ++rep.rows_parsed;
        auto fields = split_view(line, ',');
        if (fields.size() != 7) {
            if (strict) malformed(path, lineno, "expected 7 fields");
            rep.drop("malformed");
            continue;
        }
        auto t = parse_iso8601_utc(fields[1]);
        auto lat = parse_double(fields[2]);
        auto lon = parse_double(fields[3]);
        auto pm = parse_double(fields[4]);
        auto rh = parse_double(fields[5]);
        auto temp = parse_double(fields[6]);
        if (fields[0].empty() || !t || !lat || !lon || !pm || !rh || !temp) {
            if (strict) malformed(path, lineno, "bad field");
            rep.drop("malformed");
            continue;
        }
        MobileRecord rec{std::string(fields[0]), *t, geo::GeoPoint{*lat, *lon},
                         *pm, *rh, *temp};
        std::string reason;
        if (!qc_pass_mobile(rec, &reason)) {
            rep.drop(reason);
            continue;
        }
        ++rep.rows_kept;
        sink(rec);
    }
    return rep;
}

std::vector<FixedRecord> load_fixed(const std::string& path, bool strict,
                                    IngestReport* report) {
    std::vector<FixedRecord> out;
    IngestReport rep =
        stream_fixed(path, strict, [&](const FixedRecord& r) { out.push_back(r); });
    if (report) *report = rep;
    return out;
}

std::vector<MobileRecord> load_mobile(const std::string& path, bool strict,
                                      IngestReport* report) {
    std::vector<MobileRecord> out;
    IngestReport rep =
        stream_mobile(path, strict, [&](const MobileRecord& r) { out.push_back(r); });
    if (report) *report = rep;
    return out;
}

std::vector<StationInfo> load_stations(const std::string& path) {
    LineReader reader(path);
    std::vector<StationInfo> out;
    std::set<std::string> seen;
    std::string_view line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line != "station_id,lat,lon")
                throw DataError(path + ": unexpected stations CSV header: " +
                                std::string(line));
            continue;
        }
        auto fields = split_view(line, ',');
        if (fields.size() != 3) malformed(path, lineno, "expected 3 fields");
        auto lat = parse_double(fields[1]);
        auto lon = parse_double(fields[2]);
        if (fields[0].empty() || !lat || !lon) malformed(path, lineno, "bad field");
        std::string id(fields[0]);
        if (!seen.insert(id).second)
            throw DataError(path + ": duplicate station_id " + id);
        out.push_back(StationInfo{id, geo::GeoPoint{*lat, *lon}});
    }
    return out;
}

FeatureInputs load_features(const std::string& path) {
    LineReader reader(path);
    FeatureInputs out;
    std::string_view line;
    std::size_t lineno = 0;
    enum class Schema { unknown, per_cell, geometry } schema = Schema::unknown;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty()) continue;
        if (schema == Schema::unknown) {
            if (line == "layer,col,row,value")
                schema = Schema::per_cell;
            else if (line.substr(0, 11) == "layer,kind," || line == "layer,kind,coords")
                schema = Schema::geometry;
            else
                throw DataError(path + ": unrecognized feature CSV header: " +
                                std::string(line));
            continue;
        }
        auto fields = split_view(line, ',');
        std::string layer(fields[0]);
        if (!valid_layer_name(layer))
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": unknown layer name '" + layer + "'");
        if (schema == Schema::per_cell) {
            if (fields.size() != 4) malformed(path, lineno, "expected 4 fields");
            auto col = parse_int(fields[1]);
            auto row = parse_int(fields[2]);
            auto val = parse_double(fields[3]);
            if (!col || !row || !val) malformed(path, lineno, "bad field");
            out.per_cell.push_back(PerCellValue{
                layer,
                geo::CellKey{static_cast<std::int32_t>(*col),
                             static_cast<std::int32_t>(*row)},
                *val});
        } else {
            if (fields.size() < 2) malformed(path, lineno, "missing kind");
            std::string_view kind = fields[1];
            std::vector<double> coords;
            for (std::size_t i = 2; i < fields.size(); ++i) {
                auto v = parse_double(fields[i]);
                if (!v) malformed(path, lineno, "bad coordinate");
                coords.push_back(*v);
            }
            if (coords.size() % 2 != 0)
                malformed(path, lineno, "odd coordinate count");
            if (kind == "rect") {
                if (coords.size() != 4) malformed(path, lineno, "rect needs 4 coords");
                out.rects.push_back(RectGeom{layer,
                                             geo::GeoPoint{coords[0], coords[1]},
                                             geo::GeoPoint{coords[2], coords[3]}});
            } else if (kind == "polyline") {
                if (coords.size() < 4)
                    malformed(path, lineno, "polyline needs at least 2 points");
                PolylineGeom g;
                g.layer = layer;
                for (std::size_t i = 0; i < coords.size(); i += 2)
                    g.pts.push_back(geo::GeoPoint{coords[i], coords[i + 1]});
                out.polylines.push_back(std::move(g));
            } else {
                malformed(path, lineno, "unknown kind '" + std::string(kind) + "'");
            }
        }
    }
    return out;
}

double clip_segment_length(const geo::ProjectedPoint& a, const geo::ProjectedPoint& b,
                           double xmin, double xmax, double ymin, double ymax) {
    double dx = b.x - a.x, dy = b.y - a.y;
    double t0 = 0.0, t1 = 1.0;

    // Axis-parallel segments on a cell boundary fall to the half-open
    // membership test; this keeps lattice-aligned roads from being counted
    // in two adjacent cells at once.
    if (dx == 0.0) {
        if (!(a.x >= xmin && a.x < xmax)) return 0.0;
    } else {
        double ta = (xmin - a.x) / dx, tb = (xmax - a.x) / dx;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (dy == 0.0) {
        if (!(a.y >= ymin && a.y < ymax)) return 0.0;
    } else {
        double ta = (ymin - a.y) / dy, tb = (ymax - a.y) / dy;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 <= t0) return 0.0;
    return (t1 - t0) * std::hypot(dx, dy);
}

std::vector<UrbanFeatureLayer> rasterize_features(const FeatureInputs& inputs,
                                                  const geo::GridSpec& grid,
                                                  const geo::GeoPoint& ref) {
    grid.validate();
    std::map<std::string, std::vector<double>> layers;
    auto layer_of = [&](const std::string& name) -> std::vector<double>& {
        if (!valid_layer_name(name))
            throw ValidationError("unknown layer name '" + name + "'");
        auto it = layers.find(name);
        if (it == layers.end())
            it = layers.emplace(name, std::vector<double>(grid.n_cells(), 0.0)).first;
        return it->second;
    };

    const double s = grid.cell_size;
    auto col_range = [&](double lo, double hi, std::int32_t& c0, std::int32_t& c1) {
        c0 = static_cast<std::int32_t>(std::floor((lo - grid.origin.x) / s));
        c1 = static_cast<std::int32_t>(std::floor((hi - grid.origin.x) / s));
        c0 = std::max(c0, 0);
        c1 = std::min(c1, grid.n_cols - 1);
    };
    auto row_range = [&](double lo, double hi, std::int32_t& r0, std::int32_t& r1) {
        r0 = static_cast<std::int32_t>(std::floor((lo - grid.origin.y) / s));
        r1 = static_cast<std::int32_t>(std::floor((hi - grid.origin.y) / s));
        r0 = std::max(r0, 0);
        r1 = std::min(r1, grid.n_rows - 1);
    };

    for (const auto& pc : inputs.per_cell) {
        if (pc.cell.col < 0 || pc.cell.col >= grid.n_cols || pc.cell.row < 0 ||
            pc.cell.row >= grid.n_rows)
            throw ValidationError("per-cell feature outside grid: " + pc.layer);
        if (pc.value < 0.0)
            throw ValidationError("negative feature value in layer " + pc.layer);
        layer_of(pc.layer)[grid.index_of(pc.cell)] += pc.value;
    }

    for (const auto& rect : inputs.rects) {
        auto pa = geo::project(rect.a, ref);
        auto pb = geo::project(rect.b, ref);
        double x0 = std::min(pa.x, pb.x), x1 = std::max(pa.x, pb.x);
        double y0 = std::min(pa.y, pb.y), y1 = std::max(pa.y, pb.y);
        auto& vals = layer_of(rect.layer);
        std::int32_t c0, c1, r0, r1;
        col_range(x0, x1, c0, c1);
        row_range(y0, y1, r0, r1);
        for (std::int32_t r = r0; r <= r1; ++r) {
            double cy0 = grid.origin.y + r * s, cy1 = cy0 + s;
            double oy = std::min(y1, cy1) - std::max(y0, cy0);
            if (oy <= 0.0) continue;
            for (std::int32_t c = c0; c <= c1; ++c) {
                double cx0 = grid.origin.x + c * s, cx1 = cx0 + s;
                double ox = std::min(x1, cx1) - std::max(x0, cx0);
                if (ox <= 0.0) continue;
                vals[grid.index_of(geo::CellKey{c, r})] += ox * oy;
            }
        }
    }

    for (const auto& pl : inputs.polylines) {
        auto& vals = layer_of(pl.layer);
        for (std::size_t i = 0; i + 1 < pl.pts.size(); ++i) {
            auto pa = geo::project(pl.pts[i], ref);
            auto pb = geo::project(pl.pts[i + 1], ref);
            std::int32_t c0, c1, r0, r1;
            col_range(std::min(pa.x, pb.x), std::max(pa.x, pb.x), c0, c1);
            row_range(std::min(pa.y, pb.y), std::max(pa.y, pb.y), r0, r1);
            for (std::int32_t r = r0; r <= r1; ++r) {
                double cy0 = grid.origin.y + r * s, cy1 = cy0 + s;
                for (std::int32_t c = c0; c <= c1; ++c) {
                    double cx0 = grid.origin.x + c * s, cx1 = cx0 + s;
                    double len = clip_segment_length(pa, pb, cx0, cx1, cy0, cy1);
                    if (len > 0.0)
                        vals[grid.index_of(geo::CellKey{c, r})] += len;
                }
            }
        }
    }

    std::vector<UrbanFeatureLayer> out;
    out.reserve(layers.size());
    for (auto& [name, vals] : layers)
        out.push_back(UrbanFeatureLayer{name, std::move(vals)});
    return out;  // std::map iteration is already name-sorted
}

}  // namespace pmfuse::ingest
