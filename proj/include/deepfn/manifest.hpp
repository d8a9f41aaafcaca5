#pragma once

// Dataset manifest: JSON Lines. Line 1 is a header object, followed by
// participant objects and sample objects (schema in docs/formats.md).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepfn/tensor.hpp"

namespace deepfn {

enum class Gender { male, female, unspecified };

/// Fitzpatrick phototype I..VI; 0 means unspecified.
using Phototype = int;

struct ParticipantRecord {
    std::string participant_id;
    Gender gender = Gender::unspecified;
    Phototype fitzpatrick = 0;
    std::string dataset_id;
    bool excluded = false;

    friend bool operator==(const ParticipantRecord&, const ParticipantRecord&) = default;
};

struct SampleRecord {
    std::string participant_id;
    std::string image_path;  // relative to the manifest's directory
    std::string task_id;
    std::vector<int> au_occurrence;
    std::vector<std::optional<int>> au_intensity;  // empty when the corpus has no intensities

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
    std::string dataset_id;
    std::vector<std::string> au_list;
    std::vector<ParticipantRecord> participants;
    std::vector<SampleRecord> samples;
    std::filesystem::path base_dir;

    const ParticipantRecord* find(const std::string& id) const {
        for (const auto& p : participants)
            if (p.participant_id == id) return &p;
        return nullptr;
    }

    ParticipantRecord* find(const std::string& id) {
        for (auto& p : participants)
            if (p.participant_id == id) return &p;
        return nullptr;
    }

    std::vector<const SampleRecord*> samples_of(const std::string& id) const {
        std::vector<const SampleRecord*> out;
        for (const auto& s : samples)
            if (s.participant_id == id) out.push_back(&s);
        return out;
    }

    std::filesystem::path resolve(const SampleRecord& s) const { return base_dir / s.image_path; }

    bool operator==(const Manifest& o) const {
        return dataset_id == o.dataset_id && au_list == o.au_list && participants == o.participants &&
               samples == o.samples;
    }
};

class ManifestParseError : public std::runtime_error {
public:
    ManifestParseError(std::size_t line, const std::string& what)
        : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ManifestIntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string to_string(Gender g) {
    switch (g) {
        case Gender::male:
            return "male";
        case Gender::female:
            return "female";
        default:
            return "unspecified";
    }
}

inline std::optional<Gender> parse_gender(const std::string& s) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    if (s == "unspecified") return Gender::unspecified;
    return std::nullopt;
}

inline std::string phototype_name(Phototype t) {
    static const char* names[] = {"unspecified", "I", "II", "III", "IV", "V", "VI"};
    return (t >= 0 && t <= 6) ? names[t] : "unspecified";
}

inline std::optional<Phototype> parse_phototype(const std::string& s) {
    for (int t = 0; t <= 6; ++t)
        if (phototype_name(t) == s) return t;
    return std::nullopt;
}

namespace detail {

inline nlohmann::json participant_json(const ParticipantRecord& p) {
    return {{"type", "participant"},          {"participant_id", p.participant_id},
            {"gender", to_string(p.gender)},  {"fitzpatrick", phototype_name(p.fitzpatrick)},
            {"dataset_id", p.dataset_id},     {"excluded", p.excluded}};
}

inline nlohmann::json sample_json(const SampleRecord& s) {
    nlohmann::json j = {{"type", "sample"},
                        {"participant_id", s.participant_id},
                        {"image_path", s.image_path},
                        {"task_id", s.task_id},
                        {"au_occurrence", s.au_occurrence}};
    if (!s.au_intensity.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : s.au_intensity) arr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        j["au_intensity"] = arr;
    }
    return j;
}

template <typename V>
V field(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key)) throw ManifestParseError(line, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        throw ManifestParseError(line, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Checks the manifest invariants; throws ManifestIntegrityError.
inline void verify_manifest(const Manifest& m) {
    std::set<std::string> ids;
    for (const auto& p : m.participants)
        if (!ids.insert(p.participant_id).second)
            throw ManifestIntegrityError("duplicate participant_id '" + p.participant_id + "'");
    for (const auto& s : m.samples) {
        if (!ids.count(s.participant_id))
            throw ManifestIntegrityError("sample '" + s.image_path + "' references unknown participant '" +
                                         s.participant_id + "'");
        if (s.au_occurrence.size() != m.au_list.size())
            throw ManifestIntegrityError("sample '" + s.image_path + "' has " + std::to_string(s.au_occurrence.size()) +
                                         " AU labels, manifest declares " + std::to_string(m.au_list.size()));
        for (int v : s.au_occurrence)
            if (v != 0 && v != 1) throw ManifestIntegrityError("sample '" + s.image_path + "' has a non-binary AU label");
        if (!s.au_intensity.empty()) {
            if (s.au_intensity.size() != m.au_list.size())
                throw ManifestIntegrityError("sample '" + s.image_path + "' intensity vector has the wrong length");
            for (const auto& v : s.au_intensity)
                if (v && (*v < 1 || *v > 8))
                    throw ManifestIntegrityError("sample '" + s.image_path + "' has an intensity outside [1,8]");
        }
    }
}

inline Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {}) {
    Manifest m;
    m.base_dir = std::move(base_dir);
    std::string text;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ManifestParseError(line, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ManifestParseError(line, "expected a JSON object");
        const std::string type = detail::field<std::string>(j, "type", line);
        if (!have_header) {
            if (type != "header") throw ManifestParseError(line, "first record must be the header");
            m.dataset_id = detail::field<std::string>(j, "dataset_id", line);
            m.au_list = detail::field<std::vector<std::string>>(j, "au_list", line);
            have_header = true;
        } else if (type == "participant") {
            ParticipantRecord p;
            p.participant_id = detail::field<std::string>(j, "participant_id", line);
            const auto g = parse_gender(j.value("gender", std::string("unspecified")));
            if (!g) throw ManifestParseError(line, "unknown gender");
            p.gender = *g;
            const auto f = parse_phototype(j.value("fitzpatrick", std::string("unspecified")));
            if (!f) throw ManifestParseError(line, "unknown fitzpatrick phototype");
            p.fitzpatrick = *f;
            p.dataset_id = j.value("dataset_id", m.dataset_id);
            p.excluded = j.value("excluded", false);
            m.participants.push_back(std::move(p));
        } else if (type == "sample") {
            SampleRecord s;
            s.participant_id = detail::field<std::string>(j, "participant_id", line);
            s.image_path = detail::field<std::string>(j, "image_path", line);
            s.task_id = j.value("task_id", std::string("T1"));
            s.au_occurrence = detail::field<std::vector<int>>(j, "au_occurrence", line);
            if (j.contains("au_intensity")) {
                const auto& arr = j.at("au_intensity");
                if (!arr.is_array()) throw ManifestParseError(line, "au_intensity must be an array");
                for (const auto& v : arr) {
                    if (v.is_null())
                        s.au_intensity.push_back(std::nullopt);
                    else if (v.is_number_integer())
                        s.au_intensity.push_back(v.get<int>());
                    else
                        throw ManifestParseError(line, "au_intensity entries must be integers or null");
                }
            }
            m.samples.push_back(std::move(s));
        } else {
            throw ManifestParseError(line, "unknown record type '" + type + "'");
        }
    }
    if (!have_header) throw ManifestParseError(line == 0 ? 1 : line, "manifest has no header");
    verify_manifest(m);
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

inline void serialize_manifest(std::ostream& out, const Manifest& m) {
    out << nlohmann::json{{"type", "header"}, {"format", "deepfn-manifest"}, {"version", 1},
                          {"dataset_id", m.dataset_id}, {"au_list", m.au_list}}
               .dump()
        << '\n';
    for (const auto& p : m.participants) out << detail::participant_json(p).dump() << '\n';
    for (const auto& s : m.samples) out << detail::sample_json(s).dump() << '\n';
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    serialize_manifest(out, m);
}

/// Projects every label vector onto `au_list`, in that order.
inline Manifest filter_au_set(const Manifest& m, const std::vector<std::string>& au_list) {
    std::vector<std::size_t> index;
    for (const auto& au : au_list) {
        auto it = std::find(m.au_list.begin(), m.au_list.end(), au);
        require(it != m.au_list.end(), "filter_au_set: unknown AU '" + au + "'");
        index.push_back(std::size_t(it - m.au_list.begin()));
    }
    Manifest out = m;
    out.au_list = au_list;
    for (auto& s : out.samples) {
        std::vector<int> occ;
        std::vector<std::optional<int>> inten;
        for (auto i : index) {
            occ.push_back(s.au_occurrence[i]);
            if (!s.au_intensity.empty()) inten.push_back(s.au_intensity[i]);
        }
        s.au_occurrence = std::move(occ);
        s.au_intensity = std::move(inten);
    }
    return out;
}

/// Per participant: number of activations of each AU across their samples.
inline std::map<std::string, std::vector<long>> activation_counts(const Manifest& m) {
    std::map<std::string, std::vector<long>> counts;
    for (const auto& s : m.samples) {
        auto& c = counts[s.participant_id];
        if (c.empty()) c.assign(m.au_list.size(), 0);
        for (std::size_t a = 0; a < s.au_occurrence.size(); ++a) c[a] += s.au_occurrence[a];
    }
    return counts;
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/**
 * The participant whose median (over AUs) activation count is highest; ties go
 * to the lexicographically smallest id. The winner is marked excluded.
 */
inline std::string select_template(Manifest& m) {
    require(!m.au_list.empty() && !m.samples.empty(), "select_template: manifest has no labeled samples");
    const auto counts = activation_counts(m);
    std::string best;
    double best_median = -1;
    for (const auto& [id, c] : counts) {  // std::map iterates ids in lexicographic order
        const double med = median(std::vector<double>(c.begin(), c.end()));
        if (med > best_median) {
            best_median = med;
            best = id;
        }
    }
    m.find(best)->excluded = true;
    return best;
}

/// Mean intensity over coded (non-null) AU intensities, per gender. Gender groups without intensities are omitted.
inline std::map<Gender, double> mean_intensity_by_gender(const Manifest& m) {
    std::map<Gender, std::pair<double, long>> acc;
    for (const auto& s : m.samples) {
        const auto* p = m.find(s.participant_id);
        for (const auto& v : s.au_intensity)
            if (v) {
                acc[p->gender].first += *v;
                acc[p->gender].second += 1;
            }
    }
    std::map<Gender, double> out;
    for (const auto& [g, a] : acc) out[g] = a.first / double(a.second);
    return out;
}

}  // namespace deepfn
