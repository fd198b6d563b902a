#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pmfuse/errors.hpp"
#include "pmfuse/manifest.hpp"
#include "pmfuse/pipeline.hpp"
#include "pmfuse/util.hpp"

using namespace pmfuse;

namespace {
namespace fs = std::filesystem;
}

TEST_CASE("manifest parses dotted keys, comments and blank lines") {
    std::string text =
        "# comment\n"
        "grid.cell_size_m = 500\n"
        "\n"
        "out.dir = results\n"
        "sweep.distances_m = 500, 1000, 2000\n"
        "map.png = true\n"
        "scenario.start = 2023-03-01T09:00:00Z\n";
    Manifest m = Manifest::parse_text(text, "/base");
    CHECK(m.get_double("grid.cell_size_m", 0) == 500.0);
    CHECK(m.get_string("out.dir", "") == "results");
    CHECK(m.get_double_list("sweep.distances_m", {}) ==
          std::vector<double>{500, 1000, 2000});
    CHECK(m.get_bool("map.png", false));
    CHECK(m.get_time("scenario.start", 0) == 1677661200);
    CHECK(m.resolve_path("results") == "/base/results");
    CHECK(m.resolve_path("/abs/x") == "/abs/x");
    // Defaults pass through for absent keys.
    CHECK(m.get_int("grid.n_cols", 12) == 12);
}

TEST_CASE("manifest rejects unknown keys and lists them") {
    try {
        Manifest::parse_text("grid.cell_size_m = 500\nbogus.key = 1\nweird = 2\n", ".");
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("bogus.key") != std::string::npos);
        CHECK(msg.find("weird") != std::string::npos);
        CHECK(msg.find("grid.cell_size_m") == std::string::npos);
    }
}

TEST_CASE("manifest rejects malformed values with the key name") {
    Manifest m = Manifest::parse_text("grid.n_cols = twelve\n", ".");
    try {
        m.get_int("grid.n_cols", 0);
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("grid.n_cols") != std::string::npos);
    }
}

TEST_CASE("manifest duplicate keys are rejected") {
    CHECK_THROWS_AS(Manifest::parse_text("out.dir = a\nout.dir = b\n", "."),
                    ValidationError);
}

TEST_CASE("seed override only touches known keys") {
    Manifest m = Manifest::parse_text("seed.cv_folds = 1\n", ".");
    m.override_value("seed.cv_folds", "42");
    CHECK(m.get_seed("seed.cv_folds", 0) == 42);
    CHECK_THROWS_AS(m.override_value("seed.nonsense", "1"), ValidationError);
}

TEST_CASE("grid frame centers the projection on the grid bounding box") {
    pipeline::GridFrame f = pipeline::make_frame(23.05, 113.20, 500.0, 12, 10);
    // Origin projects to exactly minus half the extent in each axis.
    CHECK(f.grid.origin.x == doctest::Approx(-12 * 500.0 / 2).epsilon(1e-9));
    CHECK(f.grid.origin.y == doctest::Approx(-10 * 500.0 / 2).epsilon(1e-9));
    // And the declared origin coordinates round-trip through the frame.
    geo::GeoPoint back = geo::unproject(f.grid.origin, f.ref);
    CHECK(back.lat == doctest::Approx(23.05).epsilon(1e-9));
    CHECK(back.lon == doctest::Approx(113.20).epsilon(1e-9));
}

TEST_CASE("missing manifest file is a validation error") {
    CHECK_THROWS_AS(Manifest::parse_file("/nonexistent/manifest.txt"),
                    ValidationError);
}

TEST_CASE("stage rejects missing input path with the key name") {
    std::string dir = (fs::temp_directory_path() / "pmfuse_cli_test").string();
    fs::create_directories(dir);
    std::string manifest_path = dir + "/m.manifest";
    write_text_file(manifest_path,
                    "inputs.colocation = missing.csv\n"
                    "inputs.fixed = also_missing.csv\n"
                    "inputs.mobile = x.csv\n"
                    "inputs.stations = y.csv\n"
                    "inputs.features = z.csv\n"
                    "out.dir = out\n");
    Manifest m = Manifest::parse_file(manifest_path);
    pipeline::RunOptions opt;
    try {
        pipeline::cmd_calibrate(m, opt);
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("inputs.colocation") != std::string::npos);
    }
}

TEST_CASE("synth stage requires scenario.enabled") {
    std::string dir = (fs::temp_directory_path() / "pmfuse_cli_test2").string();
    fs::create_directories(dir);
    std::string manifest_path = dir + "/m.manifest";
    write_text_file(manifest_path, "out.dir = out\n");
    Manifest m = Manifest::parse_file(manifest_path);
    CHECK_THROWS_AS(pipeline::cmd_synth(m, pipeline::RunOptions{}), ValidationError);
}
