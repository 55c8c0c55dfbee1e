#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Flat "section.key" configuration with a fixed schema. Sources are applied
// in order: built-in defaults, then an INI file, then command-line flags.
// Keys outside the schema are rejected, so a typo never silently falls back
// to a default.
namespace gti3d::harness {

class RunConfig {
public:
    RunConfig();  // every key at its default

    // [section] / key = value, ';' or '#' comments. ConfigError on unknown
    // keys or syntax errors, InputError when the file cannot be read.
    void load_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;

    // Canonical INI rendering of every key, sorted by section and key.
    std::string echo() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace gti3d::harness
