#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rlab {

/// Bad config file, unknown key or ill-typed value. The message names the
/// source (file:line or --set) and the dotted key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using SettingValue = std::variant<bool, std::int64_t, std::uint64_t, double, std::string, std::vector<double>>;

/// Typed, dotted-key experiment settings with a fixed schema. Every key has
/// a default; files and overrides may only touch keys that exist.
///
/// Files are YAML with one level of sections:
///
///     seed: 7
///     nonlinear:
///       steps: 500
///       step_sizes: [0.01, 0.05]
class Settings {
public:
    /// The full schema with defaults.
    Settings();

    /// Merges a YAML file. Throws ConfigError with file:line on unknown
    /// keys, wrong types or malformed YAML.
    void load_file(const std::filesystem::path& path);
    void load_string(const std::string& yaml, const std::string& source = "<string>");

    /// "section.key=value", value in YAML syntax (so lists read [1, 2]).
    void apply_override(const std::string& assignment);

    bool contains(const std::string& key) const { return entries_.contains(key); }

    bool flag(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::size_t count(const std::string& key) const;  ///< non-negative integer
    std::uint64_t seed(const std::string& key) const;
    double real(const std::string& key) const;
    const std::string& text(const std::string& key) const;
    const std::vector<double>& reals(const std::string& key) const;
    std::vector<std::size_t> counts(const std::string& key) const;

    void set(const std::string& key, SettingValue v);

    /// Dotted key -> rendered value, sorted by key.
    std::vector<std::pair<std::string, std::string>> flatten() const;
    /// The resolved settings as a YAML document that load_string accepts.
    std::string to_yaml() const;

    /// Keys belonging to one section, e.g. "heat".
    std::vector<std::string> section_keys(const std::string& section) const;

private:
    struct Entry {
        SettingValue value;
        std::string help;
    };

    void define(const std::string& key, SettingValue v, std::string help);
    const Entry& at(const std::string& key) const;
    template <class V>
    const V& get(const std::string& key) const;

    std::map<std::string, Entry> entries_;
};

/// Shortest round-trip rendering of a setting value.
std::string render(const SettingValue& v);

}  // namespace rlab
