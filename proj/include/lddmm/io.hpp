#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "geodesic.hpp"
#include "point_set.hpp"
#include "record.hpp"

namespace lddmm::io {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) { text.remove_prefix(1); }
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) { text.remove_suffix(1); }
    if (!text.empty() && text.front() == '+') { text.remove_prefix(1); }
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw IoError("not a number: '" + std::string(text) + "'");
    }
    return v;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) { break; }
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) { s.remove_prefix(1); }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) { s.remove_suffix(1); }
    return std::string(s);
}

inline std::ofstream open_out(const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) { throw IoError("cannot open for writing: " + path.string()); }
    return out;
}

inline std::ifstream open_in(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) { throw IoError("cannot open for reading: " + path.string()); }
    return in;
}

inline void finish(std::ofstream &out, const std::filesystem::path &path) {
    out.flush();
    if (!out) { throw IoError("write failed: " + path.string()); }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Landmark files: header x0,...,x{d-1}, one point per row.

template <typename Tag>
void write_points_csv(std::ostream &out, const PointSet<Tag> &s) {
    for (Eigen::Index c = 0; c < s.dim(); ++c) { out << (c ? "," : "") << 'x' << c; }
    out << '\n';
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        for (Eigen::Index c = 0; c < s.dim(); ++c) { out << (c ? "," : "") << format_double(s(c, i)); }
        out << '\n';
    }
}

template <typename Tag = LandmarkTag>
PointSet<Tag> read_points_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) { throw IoError("landmark CSV: missing header"); }
    const auto header = detail::split_csv(line);
    const auto dim = static_cast<Eigen::Index>(header.size());
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (detail::trim(header[static_cast<std::size_t>(c)]) != "x" + std::to_string(c)) {
            throw IoError("landmark CSV: header must be x0,...,x{d-1}, got '" + line + "'");
        }
    }
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) { continue; }
        const auto cells = detail::split_csv(line);
        if (static_cast<Eigen::Index>(cells.size()) != dim) {
            throw IoError("landmark CSV: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                          " columns, expected " + std::to_string(dim));
        }
        for (auto cell : cells) { values.push_back(parse_double(cell)); }
    }
    if (values.empty()) { throw IoError("landmark CSV: no landmarks"); }
    PointSet<Tag> s = PointSet<Tag>::from_flat(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())), dim);
    if (!s.all_finite()) { throw IoError("landmark CSV: non-finite coordinate"); }
    return s;
}

template <typename Tag>
void save_points_csv(const std::filesystem::path &path, const PointSet<Tag> &s) {
    auto out = detail::open_out(path);
    write_points_csv(out, s);
    detail::finish(out, path);
}

template <typename Tag = LandmarkTag>
PointSet<Tag> load_points_csv(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    try {
        return read_points_csv<Tag>(in);
    } catch (const IoError &e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Geodesic path: one row per node; t, then q{i}_{c} and p{i}_{c} for each
// landmark i, then energy.

inline void write_path_csv(std::ostream &out, const GeodesicPath &path) {
    if (path.size() == 0) { throw InvalidInput("empty geodesic path"); }
    const Eigen::Index d = path.q.front().dim();
    const Eigen::Index m = path.q.front().size();
    out << 't';
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index c = 0; c < d; ++c) { out << ",q" << i << '_' << c; }
        for (Eigen::Index c = 0; c < d; ++c) { out << ",p" << i << '_' << c; }
    }
    out << ",energy\n";
    for (std::size_t k = 0; k < path.size(); ++k) {
        out << format_double(path.times[k]);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index c = 0; c < d; ++c) { out << ',' << format_double(path.q[k](c, i)); }
            for (Eigen::Index c = 0; c < d; ++c) { out << ',' << format_double(path.p[k](c, i)); }
        }
        out << ',' << format_double(path.energies[k]) << '\n';
    }
}

/// Inverse of write_path_csv; d is recovered from the column names.
inline GeodesicPath read_path_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) { throw IoError("path CSV: missing header"); }
    const auto header = detail::split_csv(line);
    if (header.size() < 4 || detail::trim(header.front()) != "t" || detail::trim(header.back()) != "energy") {
        throw IoError("path CSV: unexpected header");
    }
    Eigen::Index d = 0;
    while (static_cast<std::size_t>(1 + d) < header.size() && detail::trim(header[1 + static_cast<std::size_t>(d)]).rfind("q0_", 0) == 0) {
        ++d;
    }
    const std::size_t state_cols = header.size() - 2;
    if (d == 0 || state_cols % static_cast<std::size_t>(2 * d) != 0) { throw IoError("path CSV: malformed state columns"); }
    const auto m = static_cast<Eigen::Index>(state_cols / static_cast<std::size_t>(2 * d));
    GeodesicPath path;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) { continue; }
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) { throw IoError("path CSV: ragged row"); }
        std::size_t col = 0;
        path.times.push_back(parse_double(cells[col++]));
        LandmarkSet q(d, m);
        MomentumSet p(d, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index c = 0; c < d; ++c) { q(c, i) = parse_double(cells[col++]); }
            for (Eigen::Index c = 0; c < d; ++c) { p(c, i) = parse_double(cells[col++]); }
        }
        path.q.push_back(std::move(q));
        path.p.push_back(std::move(p));
        path.energies.push_back(parse_double(cells[col]));
    }
    return path;
}

// ---------------------------------------------------------------------------
// Misfit trace: header k,E.

inline void write_trace_csv(std::ostream &out, const MisfitTrace &trace) {
    out << "k,E\n";
    for (std::size_t k = 0; k < trace.values.size(); ++k) { out << k << ',' << format_double(trace.values[k]) << '\n'; }
}

inline std::vector<double> read_trace_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "k,E") { throw IoError("trace CSV: expected header k,E"); }
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) { continue; }
        const auto cells = detail::split_csv(line);
        if (cells.size() != 2 || parse_double(cells[0]) != static_cast<double>(values.size())) {
            throw IoError("trace CSV: malformed row '" + line + "'");
        }
        values.push_back(parse_double(cells[1]));
    }
    return values;
}

// ---------------------------------------------------------------------------
// RunRecord JSON.

inline nlohmann::json config_to_json(const EnkfConfig &cfg) {
    return {{"iterations", cfg.max_iterations}, {"timesteps", cfg.time_grid.steps()},
            {"xi", cfg.xi},                     {"tau", cfg.kernel.tau},
            {"tol", cfg.tolerance},             {"threads", cfg.threads}};
}

/// Reads the fields present in `j`, leaving the others at their current values.
inline void config_from_json(const nlohmann::json &j, EnkfConfig &cfg) {
    if (j.contains("iterations")) { cfg.max_iterations = j.at("iterations").get<std::size_t>(); }
    if (j.contains("timesteps")) { cfg.time_grid = TimeGrid(j.at("timesteps").get<std::size_t>()); }
    if (j.contains("xi")) { cfg.xi = j.at("xi").get<double>(); }
    if (j.contains("tau")) { cfg.kernel.tau = j.at("tau").get<double>(); }
    if (j.contains("tol")) { cfg.tolerance = j.at("tol").get<double>(); }
    if (j.contains("threads")) { cfg.threads = j.at("threads").get<std::size_t>(); }
}

template <typename Tag>
nlohmann::json points_to_json(const PointSet<Tag> &s) {
    auto arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        auto pt = nlohmann::json::array();
        for (Eigen::Index c = 0; c < s.dim(); ++c) { pt.push_back(s(c, i)); }
        arr.push_back(std::move(pt));
    }
    return arr;
}

template <typename Tag>
PointSet<Tag> points_from_json(const nlohmann::json &arr) {
    if (arr.empty()) { return {}; }
    const auto m = static_cast<Eigen::Index>(arr.size());
    const auto d = static_cast<Eigen::Index>(arr.at(0).size());
    PointSet<Tag> s(d, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto &pt = arr.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(pt.size()) != d) { throw IoError("ragged point array in JSON"); }
        for (Eigen::Index c = 0; c < d; ++c) { s(c, i) = pt.at(static_cast<std::size_t>(c)).get<double>(); }
    }
    return s;
}

inline nlohmann::json to_json(const RunRecord &r) {
    return {
        {"study", r.study},
        {"landmarks", r.landmarks},
        {"ensemble_size", r.ensemble_size},
        {"dim", r.dim},
        {"target_index", r.target_index},
        {"repeat", r.repeat},
        {"target_seed", r.target_seed},
        {"ensemble_seed", r.ensemble_seed},
        {"prng", r.prng},
        {"config", config_to_json(r.config)},
        {"misfits", r.trace.values},
        {"converged", r.trace.converged},
        {"iterations_run", r.trace.iterations_run},
        {"mean_update_norms", r.mean_update_norms},
        {"final_mean_momentum", points_to_json(r.final_mean_momentum)},
        {"timings",
         {{"shoot", r.timings.shoot}, {"stats", r.timings.stats}, {"solve", r.timings.solve}, {"update", r.timings.update}}},
        {"status", r.status},
        {"error", r.error},
    };
}

inline RunRecord from_json(const nlohmann::json &j) {
    RunRecord r;
    r.study = j.at("study").get<std::string>();
    r.landmarks = j.at("landmarks").get<std::size_t>();
    r.ensemble_size = j.at("ensemble_size").get<std::size_t>();
    r.dim = j.at("dim").get<std::size_t>();
    r.target_index = j.at("target_index").get<std::size_t>();
    r.repeat = j.at("repeat").get<std::size_t>();
    r.target_seed = j.at("target_seed").get<std::uint64_t>();
    r.ensemble_seed = j.at("ensemble_seed").get<std::uint64_t>();
    r.prng = j.at("prng").get<std::string>();
    config_from_json(j.at("config"), r.config);
    r.trace.values = j.at("misfits").get<std::vector<double>>();
    r.trace.converged = j.at("converged").get<bool>();
    r.trace.iterations_run = j.at("iterations_run").get<std::size_t>();
    r.mean_update_norms = j.at("mean_update_norms").get<std::vector<double>>();
    r.final_mean_momentum = points_from_json<MomentumTag>(j.at("final_mean_momentum"));
    const auto &t = j.at("timings");
    r.timings = {t.at("shoot").get<double>(), t.at("stats").get<double>(), t.at("solve").get<double>(),
                 t.at("update").get<double>()};
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    return r;
}

inline std::vector<RunRecord> load_records_json(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    std::vector<RunRecord> out;
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto &item : j.at("runs")) { out.push_back(from_json(item)); }
    } catch (const nlohmann::json::exception &e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace lddmm::io
