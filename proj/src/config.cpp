#include "brainaug/config.hpp"

#include "brainaug/io.hpp"

#include <sstream>
#include <stdexcept>

namespace brainaug {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            cfg.sections_[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    return parse(io::read_file(path));
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? fallback : jt->second;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    return std::stoi(get_str(section, key, ""));
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    return std::stod(get_str(section, key, ""));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config " + section + "." + key + ": not a boolean: " + v);
}

std::vector<int> ConfigFile::get_int_list(const std::string& section, const std::string& key,
                                          const std::vector<int>& fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<int> out;
    std::stringstream ss(get_str(section, key, ""));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) out.push_back(std::stoi(cell));
    }
    return out;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

std::string ConfigFile::canonical() const {
    std::ostringstream out;
    for (const auto& [section, entries] : sections_) {
        out << '[' << section << "]\n";
        for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
    }
    return out.str();
}

std::uint64_t ConfigFile::hash() const { return io::fnv1a64(canonical()); }

}  // namespace brainaug
