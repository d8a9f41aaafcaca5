#pragma once

// CSV, PNG and SVG outputs of condition runs (column layouts in docs/formats.md).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deepfn/experiment.hpp"
#include "deepfn/metrics.hpp"

namespace deepfn {

inline std::string fmt_double(double v, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

inline std::string fmt_fixed(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Plain comma split (no quoting); a trailing CR from CRLF files is dropped.
inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace detail

/// One row per (repetition, direction, test participant).
inline void write_scores_csv(const std::filesystem::path& path, const ConditionResult& r,
                             const std::vector<SplitDirection>& directions) {
    auto out = detail::open_out(path);
    out << "condition,normalization,repetition,direction,participant_id,score";
    for (const auto& au : r.summary.au_list) out << ',' << au << "_f1," << au << "_accuracy";
    out << '\n';
    for (const auto& row : r.rows) {
        const std::string dir = directions.empty() ? "tasks->tasks" : directions.at(row.direction).label();
        out << r.summary.condition_name << ',' << to_string(r.summary.normalization) << ',' << row.repetition << ','
            << dir << ',' << row.participant_id << ',' << fmt_double(row.score);
        for (const auto& m : row.per_au) out << ',' << fmt_double(m.f1) << ',' << fmt_double(m.accuracy);
        out << '\n';
    }
}

struct ScoresTable {
    std::string condition;
    Normalization normalization = Normalization::original;
    std::vector<std::string> au_list;
    std::vector<ScoreRow> rows;
    std::vector<std::string> direction_labels;  // per row
};

inline ScoresTable read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty scores file");
    const auto header = split_csv_line(line);
    if (header.size() < 6 || header[0] != "condition" || header[5] != "score" || (header.size() - 6) % 2 != 0)
        throw std::runtime_error(path.string() + ": not a scores file");
    ScoresTable t;
    for (std::size_t i = 6; i < header.size(); i += 2) t.au_list.push_back(header[i].substr(0, header[i].size() - 3));
    std::size_t n = 1;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() != header.size()) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": wrong column count");
        t.condition = c[0];
        const auto norm = parse_normalization(c[1]);
        if (!norm) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": bad normalization");
        t.normalization = *norm;
        ScoreRow row;
        row.repetition = std::stoul(c[2]);
        row.participant_id = c[4];
        row.score = std::stod(c[5]);
        for (std::size_t i = 6; i < c.size(); i += 2) row.per_au.push_back({std::stod(c[i]), std::stod(c[i + 1])});
        // Direction indices follow first appearance, which is the order they were written in.
        std::size_t d = 0;
        while (d < seen.size() && seen[d] != c[3]) ++d;
        if (d == seen.size()) seen.push_back(c[3]);
        row.direction = d;
        t.direction_labels.push_back(c[3]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<ConditionSummary>& summaries) {
    auto out = detail::open_out(path);
    out << "condition,normalization,count,mean,std\n";
    for (const auto& s : summaries)
        out << s.condition_name << ',' << to_string(s.normalization) << ',' << s.count << ',' << fmt_double(s.mean) << ','
            << fmt_double(s.std) << '\n';
}

inline void write_per_au_csv(const std::filesystem::path& path, const ConditionSummary& s) {
    auto out = detail::open_out(path);
    out << "au,mean_score\n";
    for (std::size_t a = 0; a < s.au_list.size(); ++a) out << s.au_list[a] << ',' << fmt_double(s.per_au_mean[a]) << '\n';
}

inline void write_breakdown_csv(const std::filesystem::path& path, const std::vector<AuDelta>& rows) {
    auto out = detail::open_out(path);
    out << "au,original,deepfn,delta\n";
    for (const auto& r : rows)
        out << r.au << ',' << fmt_double(r.original) << ',' << fmt_double(r.deepfn) << ',' << fmt_double(r.delta) << '\n';
}

inline void write_splits_csv(const std::filesystem::path& path, const std::vector<SplitRecord>& splits) {
    auto out = detail::open_out(path);
    out << "repetition,direction,role,member\n";
    for (const auto& s : splits)
        for (const auto& [role, ids] : {std::pair{"train", &s.train}, {"val", &s.val}, {"test", &s.test}})
            for (const auto& id : *ids) out << s.repetition << ',' << s.direction << ',' << role << ',' << id << '\n';
}

struct TTestRow {
    std::string a, b;
    std::size_t n_a = 0, n_b = 0;
    double mean_a = 0, mean_b = 0;
    TTestResult result;
};

inline void write_ttest_csv(const std::filesystem::path& path, const std::vector<TTestRow>& rows) {
    auto out = detail::open_out(path);
    out << "sample_a,sample_b,n_a,n_b,mean_a,mean_b,t,df,p,significant\n";
    for (const auto& r : rows)
        out << r.a << ',' << r.b << ',' << r.n_a << ',' << r.n_b << ',' << fmt_double(r.mean_a) << ','
            << fmt_double(r.mean_b) << ',' << fmt_double(r.result.t) << ',' << fmt_double(r.result.df) << ','
            << fmt_double(r.result.p) << ',' << (r.result.significant ? 1 : 0) << '\n';
}

inline void write_histogram_csv(const std::filesystem::path& path, const AverageFace& f) {
    auto out = detail::open_out(path);
    out << "level,count\n";
    for (std::size_t i = 0; i < 256; ++i) out << i << ',' << f.histogram[i] << '\n';
}

inline std::array<std::size_t, 256> read_histogram_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::array<std::size_t, 256> h{};
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto c = split_csv_line(line);
        if (c.size() != 2) continue;
        const auto level = std::stoul(c[0]);
        if (level < 256) h[level] = std::stoul(c[1]);
    }
    return h;
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '<') out += "&lt;";
        else if (ch == '>') out += "&gt;";
        else if (ch == '&') out += "&amp;";
        else out += ch;
    }
    return out;
}

}  // namespace detail

/// Grouped bar chart of per-AU scores for two series.
inline void write_per_au_svg(const std::filesystem::path& path, const std::vector<AuDelta>& rows,
                             const std::string& title) {
    const double w = 80.0 + 60.0 * double(rows.size()), h = 320, top = 40, bottom = 270, left = 50;
    auto y = [&](double score) { return bottom - (bottom - top) * std::clamp(score, 0.0, 100.0) / 100.0; };
    auto out = detail::open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << detail::svg_escape(title)
        << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << w - 10 << "\" y2=\"" << bottom
        << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 100; tick += 25)
        out << "<text x=\"5\" y=\"" << y(tick) + 4 << "\" font-family=\"sans-serif\" font-size=\"10\">" << tick
            << "</text>\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double x = left + 10 + 60.0 * double(i);
        out << "<rect x=\"" << x << "\" y=\"" << y(rows[i].original) << "\" width=\"20\" height=\""
            << bottom - y(rows[i].original) << "\" fill=\"#9e9e9e\"><title>original " << fmt_fixed(rows[i].original, 2)
            << "</title></rect>\n";
        out << "<rect x=\"" << x + 22 << "\" y=\"" << y(rows[i].deepfn) << "\" width=\"20\" height=\""
            << bottom - y(rows[i].deepfn) << "\" fill=\"#3f6fb5\"><title>deepfn " << fmt_fixed(rows[i].deepfn, 2)
            << "</title></rect>\n";
        out << "<text x=\"" << x << "\" y=\"" << bottom + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::svg_escape(rows[i].au) << "</text>\n";
    }
    out << "<text x=\"" << left << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << "grey: original, blue: deepfn</text>\n</svg>\n";
}

/// Luminance histograms as normalized polylines, one per named series.
inline void write_histogram_svg(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, std::array<std::size_t, 256>>>& series,
                                const std::string& title) {
    static const char* colors[] = {"#9e9e9e", "#3f6fb5", "#c0504d", "#4f8f3a"};
    const double w = 560, h = 300, left = 20, bottom = 260, top = 40;
    auto out = detail::open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << detail::svg_escape(title)
        << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& hist = series[s].second;
        std::size_t peak = 1;
        for (auto c : hist) peak = std::max(peak, c);
        out << "<polyline fill=\"none\" stroke=\"" << colors[s % 4] << "\" points=\"";
        for (std::size_t i = 0; i < 256; ++i)
            out << left + 2.0 * double(i) << ',' << bottom - (bottom - top) * double(hist[i]) / double(peak) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << left + 130.0 * double(s) << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" "
            << "font-size=\"11\" fill=\"" << colors[s % 4] << "\">" << detail::svg_escape(series[s].first) << "</text>\n";
    }
    out << "</svg>\n";
}

/// Writes scores, summary, per-AU means, splits and per-group mean faces of one run into `dir`.
inline void write_condition_outputs(const std::filesystem::path& dir, const ConditionResult& r,
                                    const ExperimentConfig& config) {
    std::filesystem::create_directories(dir);
    write_scores_csv(dir / "scores.csv", r, config.person_dependent ? std::vector<SplitDirection>{} : config.directions);
    write_summary_csv(dir / "summary.csv", {r.summary});
    write_per_au_csv(dir / "per_au.csv", r.summary);
    write_splits_csv(dir / "splits.csv", r.splits);
    for (const auto& [group, face] : r.group_faces) {
        write_png(dir / ("mean_face_" + group + ".png"), face.mean_image());
        write_histogram_csv(dir / ("histogram_" + group + ".csv"), face);
    }
    std::ofstream(dir / "template.txt") << r.template_id << '\n';
}

}  // namespace deepfn
