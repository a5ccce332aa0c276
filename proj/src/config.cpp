#include "djf/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace djf {

namespace {

constexpr const char* kHeader = "djf-config v1";

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_text(ss.str());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

Config Config::parse_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kHeader)
        throw std::runtime_error("missing '" + std::string(kHeader) + "' header");
    Config cfg;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("line " + std::to_string(lineno) + ": empty key");
        cfg.set(key, value);
    }
    return cfg;
}

const std::string* Config::find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return &v;
    return nullptr;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        int out = std::stoi(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': '" + *v +
                                 "' is not an integer");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        double out = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': '" + *v +
                                 "' is not a number");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw std::runtime_error("config key '" + key + "': '" + *v +
                             "' is not a boolean");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        unsigned long long out = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': '" + *v +
                                 "' is not an unsigned integer");
    }
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::vector<int> out;
    std::istringstream ss(*v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(part, &pos));
            if (pos != part.size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::runtime_error("config key '" + key + "': '" + part +
                                     "' is not an integer");
        }
    }
    return out;
}

void Config::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

void Config::set_int(const std::string& key, long long value) {
    set(key, std::to_string(value));
}

void Config::set_double(const std::string& key, double value) {
    std::ostringstream ss;
    ss.precision(17);
    ss << value;
    set(key, ss.str());
}

void Config::set_bool(const std::string& key, bool value) {
    set(key, value ? "true" : "false");
}

void Config::set_int_list(const std::string& key, const std::vector<int>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(values[i]);
    }
    set(key, s);
}

std::string Config::to_text() const {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

void Config::write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file " + path);
    out << to_text();
}

}  // namespace djf
