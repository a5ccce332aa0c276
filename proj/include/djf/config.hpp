#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace djf {

/// Versioned key-value configuration ("djf-config v1"): one `key = value`
/// per line, `#` comments, insertion order preserved on write. Unknown keys
/// are kept so resolved configs written next to outputs stay self-contained.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    /// Comma-separated integer list.
    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& fallback) const;

    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, long long value);
    void set_double(const std::string& key, double value);
    void set_bool(const std::string& key, bool value);
    void set_int_list(const std::string& key, const std::vector<int>& values);

    void write_file(const std::string& path) const;
    std::string to_text() const;

private:
    const std::string* find(const std::string& key) const;
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace djf
