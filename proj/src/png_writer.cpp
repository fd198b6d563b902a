#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pmfuse/errors.hpp"
#include "pmfuse/maps.hpp"

// Minimal 8-bit grayscale PNG writer over zlib. Deterministic output:
// fixed compression level, no ancillary chunks.

namespace pmfuse::maps {

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const unsigned char* data, std::size_t len) {
    put_be32(out, static_cast<std::uint32_t>(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(4 + len)));
    put_be32(out, crc);
}

}  // namespace

void write_map_png(const PollutionMap& map, const std::string& path) {
    const std::int32_t w = map.grid.n_cols;
    const std::int32_t h = map.grid.n_rows;
    if (w <= 0 || h <= 0) throw ValidationError("png: empty grid");

    // One filter byte (0 = none) plus w pixels per scanline; PNG rows run
    // top-down while grid row 0 is the south edge, so rows flip.
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (w + 1), 0);
    for (std::int32_t row = 0; row < h; ++row) {
        std::size_t line = static_cast<std::size_t>(h - 1 - row) * (w + 1);
        raw[line] = 0;
        for (std::int32_t col = 0; col < w; ++col) {
            double v = map.values[static_cast<std::size_t>(row) * w + col];
            double g = std::isfinite(v) ? v / 100.0 * 255.0 : 0.0;
            if (g < 0.0) g = 0.0;
            if (g > 255.0) g = 255.0;
            raw[line + 1 + col] = static_cast<unsigned char>(std::lround(g));
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw InternalError("png: deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out;
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(w >> 24);
    ihdr[1] = static_cast<unsigned char>(w >> 16);
    ihdr[2] = static_cast<unsigned char>(w >> 8);
    ihdr[3] = static_cast<unsigned char>(w);
    ihdr[4] = static_cast<unsigned char>(h >> 24);
    ihdr[5] = static_cast<unsigned char>(h >> 16);
    ihdr[6] = static_cast<unsigned char>(h >> 8);
    ihdr[7] = static_cast<unsigned char>(h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // grayscale
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // no interlace
    put_chunk(out, "IHDR", ihdr, sizeof(ihdr));
    put_chunk(out, "IDAT", compressed.data(), compressed.size());
    put_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write png: " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("png write failed: " + path);
}

}  // namespace pmfuse::maps
