#pragma once

#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace deepfn {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Read-only view over a JSON object that rejects keys it was not told about.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where, std::initializer_list<const char*> allowed)
        : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, _] : j_.items())
            if (!ok.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const nlohmann::json& raw(const char* key) const { return j_.at(key); }

    std::string path(const char* key) const { return where_ + "." + key; }

    template <typename V>
    void get(const char* key, V& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<V>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

private:
    const nlohmann::json& j_;
    std::string where_;
};

}  // namespace deepfn
