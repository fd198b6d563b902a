#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmfuse/geo.hpp"
#include "pmfuse/manifest.hpp"

namespace pmfuse::pipeline {

// Projection reference (grid bounding-box centroid) plus the tessellation it
// anchors. All stages share one frame derived from the manifest's grid keys.
struct GridFrame {
    geo::GeoPoint ref;
    geo::GridSpec grid;
};

GridFrame make_frame(double origin_lat, double origin_lon, double cell_size_m,
                     std::int32_t n_cols, std::int32_t n_rows);
GridFrame frame_from_manifest(const Manifest& m);

struct RunOptions {
    int threads = 1;
    bool strict = false;
    std::string out_dir;  // overrides manifest out.dir when non-empty
};

// Each stage reads its inputs from files, writes its outputs plus a stage
// log with input checksums, and returns the files it wrote (relative to the
// out dir).
std::vector<std::string> cmd_synth(const Manifest& m, const RunOptions& opt);
std::vector<std::string> cmd_calibrate(const Manifest& m, const RunOptions& opt);
std::vector<std::string> cmd_sweep(const Manifest& m, const RunOptions& opt);
std::vector<std::string> cmd_fuse(const Manifest& m, const RunOptions& opt);
std::vector<std::string> cmd_map(const Manifest& m, const RunOptions& opt);
// synth (when scenario.enabled) -> calibrate -> sweep -> fuse -> map, then a
// run-level manifest with a checksum for every output file.
std::vector<std::string> cmd_all(const Manifest& m, const RunOptions& opt);

std::string out_dir_of(const Manifest& m, const RunOptions& opt);

}  // namespace pmfuse::pipeline
