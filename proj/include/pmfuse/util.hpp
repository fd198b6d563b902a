#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pmfuse {

// ---- time ----------------------------------------------------------------

// Parse UTC ISO-8601 "YYYY-MM-DDThh:mm:ssZ" to seconds since epoch.
// Returns nullopt on malformed input.
std::optional<std::int64_t> parse_iso8601_utc(std::string_view s);

// Inverse of parse_iso8601_utc.
std::string format_iso8601_utc(std::int64_t t);

// ---- numeric -------------------------------------------------------------

// Neumaier compensated accumulator. Metrics sums may run over millions of
// cells; the compensation keeps them deterministic and accurate.
class KahanSum {
public:
    void add(double v) {
        double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            c_ += (sum_ - t) + v;
        else
            c_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

inline double clamp_pm25(double v) {
    if (v < 0.0) return 0.0;
    if (v > 500.0) return 500.0;
    return v;
}

// ---- strings / csv -------------------------------------------------------

// Split on a delimiter; no quoting (none of the file formats need it).
std::vector<std::string_view> split_view(std::string_view line, char delim);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Shortest round-trip representation (%.17g trimmed); used wherever a value
// must survive a serialize/parse cycle bit-for-bit.
std::string format_double(double v);

// ---- filesystem ----------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

std::uint64_t file_checksum(const std::string& path);

// ---- parallel ------------------------------------------------------------

// Run fn(i) for i in [0, n) across at most `threads` workers. Work is split
// into contiguous chunks; each index is processed exactly once, so results
// written to disjoint slots are identical for any thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace pmfuse
