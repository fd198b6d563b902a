#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pmfuse/errors.hpp"
#include "pmfuse/geo.hpp"
#include "pmfuse/rng.hpp"

using namespace pmfuse;
using namespace pmfuse::geo;

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

TEST_CASE("project identity at reference") {
    GeoPoint ref{23.1, 113.3};
    ProjectedPoint p = project(ref, ref);
    CHECK(p.x == 0.0);
    CHECK(p.y == 0.0);
}

TEST_CASE("project northward offset matches spherical arc") {
    GeoPoint ref{23.1, 113.3};
    // Independent evaluation: R * dlat_rad.
    double expected = kEarthRadiusM * 0.001 * kDegToRad;
    ProjectedPoint p = project(GeoPoint{ref.lat + 0.001, ref.lon}, ref);
    CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
    // 1e-9 relative: (ref.lat + 0.001) - ref.lat is not exactly 0.001 in
    // binary, which is where the remaining difference comes from.
    CHECK(p.y == doctest::Approx(expected).epsilon(1e-9));
    CHECK(p.y == doctest::Approx(111.19).epsilon(1e-4));
}

TEST_CASE("project eastward offset at the equator") {
    GeoPoint ref{0.0, 10.0};
    double expected = kEarthRadiusM * 0.001 * kDegToRad;  // cos(0) = 1
    ProjectedPoint p = project(GeoPoint{0.0, 10.001}, ref);
    CHECK(p.x == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p.y == 0.0);
}

TEST_CASE("project rejects out-of-range coordinates") {
    GeoPoint ref{23.0, 113.0};
    CHECK_THROWS_AS(project(GeoPoint{91.0, 0.0}, ref), CoordinateError);
    CHECK_THROWS_AS(project(GeoPoint{0.0, 181.0}, ref), CoordinateError);
}

TEST_CASE("project/unproject round trip under 1e-6 degrees within 100 km") {
    GeoPoint ref{23.1, 113.3};
    Rng rng(42);
    for (int i = 0; i < 500; ++i) {
        // Up to roughly 100 km from the reference.
        GeoPoint g{ref.lat + rng.uniform(-0.9, 0.9), ref.lon + rng.uniform(-0.9, 0.9)};
        GeoPoint back = unproject(project(g, ref), ref);
        CHECK(std::abs(back.lat - g.lat) < 1e-6);
        CHECK(std::abs(back.lon - g.lon) < 1e-6);
    }
}

TEST_CASE("cell_of basics") {
    GridSpec g{ProjectedPoint{0.0, 0.0}, 500.0, 4, 4};
    CHECK(*cell_of(ProjectedPoint{0.0, 0.0}, g) == CellKey{0, 0});
    CHECK(*cell_of(ProjectedPoint{500.0, 500.0}, g) == CellKey{1, 1});
    CHECK(*cell_of(ProjectedPoint{1250.0, 250.0}, g) == CellKey{2, 0});
    CHECK(!cell_of(ProjectedPoint{-0.001, 0.0}, g));
    CHECK(!cell_of(ProjectedPoint{2000.0, 0.0}, g));  // max edge is outside
}

TEST_CASE("cell partition: interior points land in exactly one cell") {
    GridSpec g{ProjectedPoint{-1000.0, -1000.0}, 250.0, 8, 8};
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        ProjectedPoint p{g.origin.x + rng.uniform(0.0, 8 * 250.0),
                         g.origin.y + rng.uniform(0.0, 8 * 250.0)};
        auto key = cell_of(p, g);
        REQUIRE(key.has_value());
        double x0 = g.origin.x + key->col * g.cell_size;
        double y0 = g.origin.y + key->row * g.cell_size;
        CHECK(p.x >= x0);
        CHECK(p.x < x0 + g.cell_size);
        CHECK(p.y >= y0);
        CHECK(p.y < y0 + g.cell_size);
    }
}

TEST_CASE("in_station_cell edges") {
    StationCell c{"S", ProjectedPoint{100.0, 100.0}, 250.0};
    CHECK(in_station_cell(ProjectedPoint{100.0, 100.0}, c));
    CHECK(!in_station_cell(ProjectedPoint{350.0, 100.0}, c));  // max edge open
    CHECK(in_station_cell(ProjectedPoint{-150.0, 100.0}, c)); // min edge closed
    CHECK(in_station_cell(ProjectedPoint{349.999, 349.999}, c));
}

TEST_CASE("in_station_cell equals Chebyshev rule on random points") {
    StationCell c{"S", ProjectedPoint{-20.0, 35.0}, 180.0};
    Rng rng(99);
    for (int i = 0; i < 5000; ++i) {
        ProjectedPoint p{c.center.x + rng.uniform(-400.0, 400.0),
                         c.center.y + rng.uniform(-400.0, 400.0)};
        double dx = p.x - c.center.x, dy = p.y - c.center.y;
        bool expected = dx >= -c.half_width && dx < c.half_width &&
                        dy >= -c.half_width && dy < c.half_width;
        CHECK(in_station_cell(p, c) == expected);
    }
}

TEST_CASE("grid validation") {
    GridSpec bad{ProjectedPoint{0, 0}, 0.0, 4, 4};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    GridSpec bad2{ProjectedPoint{0, 0}, 100.0, 0, 4};
    CHECK_THROWS_AS(bad2.validate(), ValidationError);
}
