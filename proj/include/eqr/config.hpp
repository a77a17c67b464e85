#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace eqr {

/// Flat view of a hierarchical key-value file:
///
///   seed = 3
///   [solver]
///   algorithm = ered
///   sigma = 8/255
///   [denoiser.kernel]
///   spec = gaussian:1
///
/// Keys are addressed by dotted paths ("solver.sigma"). '#' and ';' start
/// comments. Values are kept as text and converted on access.
class ConfigTree {
public:
    static ConfigTree parse(const std::string& text, const std::string& source = "<config>");
    static ConfigTree load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    /// 0 for keys that were set programmatically.
    int line_of(const std::string& key) const;
    const std::string& source() const noexcept { return source_; }
    std::vector<std::string> keys() const;

    std::optional<std::string> get_string(const std::string& key) const;
    std::optional<double> get_number(const std::string& key) const;
    std::optional<std::int64_t> get_int(const std::string& key) const;
    std::optional<std::uint64_t> get_u64(const std::string& key) const;
    std::optional<bool> get_bool(const std::string& key) const;
    /// Comma-separated lists.
    std::optional<std::vector<std::string>> get_list(const std::string& key) const;
    std::optional<std::vector<double>> get_number_list(const std::string& key) const;

    void set(const std::string& key, std::string value);

    /// Throws a config error naming the first key outside `allowed`, with
    /// source and line.
    void reject_unknown(const std::set<std::string>& allowed) const;

    /// Canonical text: top-level keys first, then one [section] per prefix,
    /// keys sorted. parse(to_text()) reproduces the tree.
    std::string to_text() const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    std::string where(const std::string& key) const;

    std::map<std::string, Entry> entries_;
    std::string source_ = "<config>";
};

/// Decimal ("0.17", "1e-3") or rational ("7/255") literal. Decimals are
/// converted with correct rounding; rationals as one division of the two
/// decimal parts.
double parse_number(const std::string& text);
std::optional<double> try_parse_number(const std::string& text);

/// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace eqr
