#pragma once

#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ppd {

/// Plain `key = value` text config. `#` starts a comment; a key may repeat,
/// in which case the lookups below return the last value and `get_all`
/// returns every occurrence in file order.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_all(const std::string& key) const;

    /// Throws InvalidInput naming the first key not in `allowed`.
    void require_known(std::initializer_list<std::string_view> allowed) const;

private:
    std::map<std::string, std::vector<std::string>> values_;
    std::map<std::string, int> lines_;
};

/// Splits on whitespace and commas.
std::vector<std::string> split_fields(std::string_view s);

}  // namespace ppd
