#pragma once

#include "sdlab/distillation_core.hpp"
#include "sdlab/gram_models.hpp"
#include "sdlab/noise_theory.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sdlab::io {

// 12 significant digits, '.' separator regardless of locale
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;  // drop negative zero
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
        throw ValidationError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

inline int parse_int(std::string_view s, const std::string& where) {
    double v = parse_double(s, where);
    if (v != std::floor(v)) throw ValidationError(where + ": expected an integer, got '" + std::string(s) + "'");
    return static_cast<int>(v);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool blank(std::string_view s) {
    return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline bool numeric_row(const std::vector<std::string_view>& cells) {
    for (auto c : cells) {
        double v;
        std::string_view t = c;
        while (!t.empty() && (t.front() == ' ' || t.front() == '+')) t.remove_prefix(1);
        while (!t.empty() && (t.back() == ' ' || t.back() == '\r')) t.remove_suffix(1);
        auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty()) return false;
    }
    return true;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << text;
}

inline std::string output_csv(const std::vector<OutputMatrix>& rounds) {
    std::string s = "round,sample_index,class_index,value\n";
    for (const auto& om : rounds)
        for (int i = 0; i < om.size(); ++i)
            for (int k = 0; k < om.K(); ++k)
                s += std::to_string(om.round) + "," + std::to_string(i) + "," + std::to_string(k) + "," +
                     num(om.Y(k, i)) + "\n";
    return s;
}

inline std::string partial_label_csv(const PartialLabelMatrix& pm, int round) {
    return output_csv({OutputMatrix{pm.Y, round}});
}

inline std::string labels_csv(const LabelAssignment& la) {
    std::string s = "index,true_label,given_label\n";
    for (int i = 0; i < la.size(); ++i)
        s += std::to_string(i) + "," + std::to_string(la.true_labels[i]) + "," + std::to_string(la.given_labels[i]) + "\n";
    return s;
}

inline LabelAssignment parse_labels_csv(const std::string& text) {
    LabelAssignment la;
    std::istringstream in(text);
    std::string line;
    int lineno = 0, maxlab = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto cells = split(line);
        if (lineno == 1 && !numeric_row(cells)) continue;
        std::string where = "labels line " + std::to_string(lineno);
        if (cells.size() != 3) throw ValidationError(where + ": expected 3 columns");
        la.true_labels.push_back(parse_int(cells[1], where));
        la.given_labels.push_back(parse_int(cells[2], where));
        maxlab = std::max({maxlab, la.true_labels.back(), la.given_labels.back()});
    }
    la.K = maxlab + 1;
    la.n = la.K > 0 ? la.size() / la.K : 0;
    return la;
}

inline std::string matrix_csv(const Matrix& m) {
    std::string s;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) s += ",";
            s += num(m(i, j));
        }
        s += "\n";
    }
    return s;
}

inline Matrix parse_matrix_csv(const std::string& text, const std::string& name = "matrix") {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        std::vector<double> r;
        for (auto c : split(line)) r.push_back(parse_double(c, name + " line " + std::to_string(lineno)));
        if (!rows.empty() && r.size() != rows.front().size())
            throw ValidationError(name + " line " + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ValidationError(name + ": empty");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

inline std::string corruption_csv(const CorruptionMatrix& C) { return matrix_csv(C.entries); }

inline CorruptionMatrix parse_corruption_csv(const std::string& text) {
    return CorruptionMatrix(parse_matrix_csv(text, "corruption matrix"));
}

// rows of features, final column an integer class label
inline FeatureMatrix parse_features_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto cells = split(line);
        if (lineno == 1 && !numeric_row(cells)) continue;
        std::string where = "features line " + std::to_string(lineno);
        if (cells.size() < 2) throw ValidationError(where + ": need at least one feature and a label");
        std::vector<double> r;
        for (std::size_t j = 0; j + 1 < cells.size(); ++j) r.push_back(parse_double(cells[j], where));
        if (!rows.empty() && r.size() != rows.front().size())
            throw ValidationError(where + ": expected " + std::to_string(rows.front().size()) + " features");
        int lab = parse_int(cells.back(), where);
        if (lab < 0) throw ValidationError(where + ": negative label");
        rows.push_back(std::move(r));
        labels.push_back(lab);
    }
    if (rows.empty()) throw ValidationError("features: no rows");
    FeatureMatrix f;
    f.rows.resize(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) f.rows(i, j) = rows[i][j];
    f.labels = std::move(labels);
    return f;
}

// "class_index,superclass_index" per line
inline SuperclassMap parse_superclass_csv(const std::string& text) {
    std::vector<std::pair<int, int>> entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto cells = split(line);
        if (lineno == 1 && !numeric_row(cells)) continue;
        std::string where = "superclass line " + std::to_string(lineno);
        if (cells.size() != 2) throw ValidationError(where + ": expected class_index,superclass_index");
        entries.emplace_back(parse_int(cells[0], where), parse_int(cells[1], where));
    }
    std::sort(entries.begin(), entries.end());
    std::vector<int> a;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first != static_cast<int>(i))
            throw ValidationError("superclass file: class indices must be 0..K-1 without gaps");
        a.push_back(entries[i].second);
    }
    return SuperclassMap(a);
}

} // namespace sdlab::io
