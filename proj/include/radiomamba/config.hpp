#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace radiomamba {

// Line-oriented key=value text with '#' comments. Entries keep insertion
// order so serialization is byte-stable.
class KvConfig {
public:
    static KvConfig parse(const std::string& text);
    static KvConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, long long value);

    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    bool has(const std::string& key) const;

    std::string serialize() const;
    void save(const std::string& path) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace radiomamba
