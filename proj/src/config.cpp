#include "radiomamba/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "radiomamba/errors.hpp"

namespace radiomamba {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not key=value: '" + line + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void KvConfig::set_double(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    set(key, os.str());
}

void KvConfig::set_int(const std::string& key, long long value) { set(key, std::to_string(value)); }

std::optional<std::string> KvConfig::get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    return std::nullopt;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
    auto v = get(key);
    return v ? *v : fallback;
}

double KvConfig::get_double(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing config key: " + key);
    char* end = nullptr;
    const double d = std::strtod(v->c_str(), &end);
    if (end == v->c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "' is not a number: '" + *v + "'");
    return d;
}

long long KvConfig::get_int(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing config key: " + key);
    char* end = nullptr;
    const long long i = std::strtoll(v->c_str(), &end, 10);
    if (end == v->c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "' is not an integer: '" + *v + "'");
    return i;
}

bool KvConfig::has(const std::string& key) const { return get(key).has_value(); }

std::string KvConfig::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << "=" << v << "\n";
    return os.str();
}

void KvConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write config file: " + path);
    out << serialize();
}

}  // namespace radiomamba
