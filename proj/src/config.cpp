#include "eqr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqr/error.hpp"

namespace eqr {
namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s)
{
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return s.front() != '.' && s.back() != '.' && s.find("..") == std::string::npos;
}

std::optional<double> parse_decimal(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    const char* b = s.data();
    const char* e = b + s.size();
    if (*b == '+') ++b;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) return std::nullopt;
    return v;
}

std::string strip_comment(const std::string& line)
{
    const auto pos = line.find_first_of("#;");
    return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

std::optional<double> try_parse_number(const std::string& text)
{
    const std::string s = trim(text);
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse_decimal(s);
    const auto num = parse_decimal(trim(s.substr(0, slash)));
    const auto den = parse_decimal(trim(s.substr(slash + 1)));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
}

double parse_number(const std::string& text)
{
    const auto v = try_parse_number(text);
    if (!v || !std::isfinite(*v)) throw_error(ErrorKind::Parse, "not a number: '" + text + "'");
    return *v;
}

std::string format_number(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

ConfigTree ConfigTree::parse(const std::string& text, const std::string& source)
{
    ConfigTree tree;
    tree.source_ = source;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        const std::string at = source + ":" + std::to_string(line);
        if (s.front() == '[') {
            if (s.back() != ']') throw_error(ErrorKind::Parse, at + ": unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (!valid_name(section)) throw_error(ErrorKind::Parse, at + ": bad section name '" + section + "'");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw_error(ErrorKind::Parse, at + ": expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        if (!valid_name(key) || key.find('.') != std::string::npos) {
            throw_error(ErrorKind::Parse, at + ": bad key '" + key + "'");
        }
        const std::string path = section.empty() ? key : section + "." + key;
        if (tree.entries_.count(path) != 0) {
            throw_error(ErrorKind::Parse, at + ": duplicate key '" + path + "' (first set on line " +
                                              std::to_string(tree.entries_[path].line) + ")");
        }
        tree.entries_[path] = Entry{trim(s.substr(eq + 1)), line};
    }
    return tree;
}

ConfigTree ConfigTree::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorKind::Io, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

int ConfigTree::line_of(const std::string& key) const
{
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

std::vector<std::string> ConfigTree::keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::string ConfigTree::where(const std::string& key) const
{
    const int line = line_of(key);
    return line > 0 ? source_ + ":" + std::to_string(line) + ": '" + key + "'" : "'" + key + "'";
}

std::optional<std::string> ConfigTree::get_string(const std::string& key) const
{
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

std::optional<double> ConfigTree::get_number(const std::string& key) const
{
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    const auto v = try_parse_number(*s);
    if (!v || !std::isfinite(*v)) throw_error(ErrorKind::Config, where(key) + " is not a number: '" + *s + "'");
    return v;
}

std::optional<std::int64_t> ConfigTree::get_int(const std::string& key) const
{
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
        throw_error(ErrorKind::Config, where(key) + " is not an integer: '" + *s + "'");
    }
    return v;
}

std::optional<std::uint64_t> ConfigTree::get_u64(const std::string& key) const
{
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
        throw_error(ErrorKind::Config, where(key) + " is not an unsigned integer: '" + *s + "'");
    }
    return v;
}

std::optional<bool> ConfigTree::get_bool(const std::string& key) const
{
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "false" || *s == "no" || *s == "0") return false;
    throw_error(ErrorKind::Config, where(key) + " is not a boolean: '" + *s + "'");
}

std::optional<std::vector<std::string>> ConfigTree::get_list(const std::string& key) const
{
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(*s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::optional<std::vector<double>> ConfigTree::get_number_list(const std::string& key) const
{
    const auto items = get_list(key);
    if (!items) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : *items) {
        const auto v = try_parse_number(item);
        if (!v || !std::isfinite(*v)) {
            throw_error(ErrorKind::Config, where(key) + " has a non-numeric entry '" + item + "'");
        }
        out.push_back(*v);
    }
    return out;
}

void ConfigTree::set(const std::string& key, std::string value)
{
    require(valid_name(key), ErrorKind::Config, "bad key '" + key + "'");
    auto& e = entries_[key];
    e.value = trim(value);
}

void ConfigTree::reject_unknown(const std::set<std::string>& allowed) const
{
    for (const auto& [k, e] : entries_) {
        if (allowed.count(k) == 0) throw_error(ErrorKind::Config, "unknown key " + where(k));
    }
}

std::string ConfigTree::to_text() const
{
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, e] : entries_) {
        const auto dot = k.rfind('.');
        if (dot == std::string::npos) {
            sections[""].emplace_back(k, e.value);
        } else {
            sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), e.value);
        }
    }
    std::string out;
    for (const auto& [name, items] : sections) {
        if (!name.empty()) out += (out.empty() ? "" : "\n") + std::string("[") + name + "]\n";
        for (const auto& [k, v] : items) out += k + " = " + v + "\n";
    }
    return out;
}

}  // namespace eqr
