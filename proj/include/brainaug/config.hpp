#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace brainaug {

/// Plain-text configuration: `[section]` lines open a section, `key = value`
/// lines set entries, `#` starts a comment. Sections and keys keep a stable
/// order so the config hash is well defined.
class ConfigFile {
  public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                  const std::vector<int>& fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Canonical serialization (sorted sections/keys) used for hashing.
    std::string canonical() const;
    std::uint64_t hash() const;

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace brainaug
