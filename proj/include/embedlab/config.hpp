#ifndef EMBEDLAB_CONFIG_HPP
#define EMBEDLAB_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace embedlab {

// Flat key-value config with [section] headers; `#` starts a comment, keys
// become "section.key". Grammar documented in docs/config.md.
class Config {
public:
    static Config parse_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string s = trim(line);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            std::string full = section.empty() ? key : section + "." + key;
            cfg.entries_[full] = val;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string str(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw std::runtime_error("missing config key: " + key);
        return it->second;
    }
    std::string str(const std::string& key, const std::string& dflt) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? dflt : it->second;
    }

    double num(const std::string& key) const { return to_num(key, str(key)); }
    double num(const std::string& key, double dflt) const {
        return has(key) ? num(key) : dflt;
    }

    std::int64_t integer(const std::string& key) const {
        double v = num(key);
        auto r = static_cast<std::int64_t>(v);
        if (static_cast<double>(r) != v) throw std::runtime_error("config key " + key + ": not an integer");
        return r;
    }
    std::int64_t integer(const std::string& key, std::int64_t dflt) const {
        return has(key) ? integer(key) : dflt;
    }

    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    std::vector<double> num_list(const std::string& key) const {
        std::vector<double> out;
        for (const std::string& s : list(key)) out.push_back(to_num(key, s));
        return out;
    }

    // every key under a section, e.g. all configured tolerances
    std::vector<std::string> section_keys(const std::string& section) const {
        std::vector<std::string> out;
        std::string prefix = section + ".";
        for (const auto& [k, v] : entries_)
            if (k.rfind(prefix, 0) == 0) out.push_back(k);
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }
    static double to_num(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("config key " + key + ": not a number: '" + s + "'");
        }
        if (pos != s.size()) throw std::runtime_error("config key " + key + ": trailing junk in '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> entries_;
};

} // namespace embedlab

#endif
