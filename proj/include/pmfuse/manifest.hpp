#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmfuse {

// Flat key-value run manifest: one `section.key = value` per line, `#`
// comments. Unknown keys are validation errors so typos surface instead of
// silently falling back to defaults.
class Manifest {
public:
    static Manifest parse_file(const std::string& path);
    static Manifest parse_text(const std::string& text, const std::string& dir);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& def) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double def) const;
    std::int64_t get_int(const std::string& key, std::int64_t def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::uint64_t get_seed(const std::string& key, std::uint64_t def) const;
    // ISO-8601 timestamp value.
    std::int64_t get_time(const std::string& key, std::int64_t def) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const;
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& def) const;
    std::vector<std::string> get_string_list(const std::string& key,
                                             const std::vector<std::string>& def) const;

    // Paths resolve relative to the manifest's directory.
    std::string resolve_path(const std::string& value) const;

    void override_value(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& values() const { return values_; }
    const std::string& dir() const { return dir_; }

private:
    [[noreturn]] void bad_key(const std::string& key, const std::string& why) const;
    std::map<std::string, std::string> values_;
    std::string dir_;
};

}  // namespace pmfuse
