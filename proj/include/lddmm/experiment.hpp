#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "enkf.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "record.hpp"
#include "svg.hpp"
#include "synth.hpp"

namespace lddmm {

enum class Study { regularisation, robustness, single };

inline std::string to_string(Study s) {
    switch (s) {
        case Study::regularisation: return "regularisation";
        case Study::robustness: return "robustness";
        case Study::single: return "single";
    }
    return "unknown";
}

/// A batch of synthetic matching runs over the grid
/// landmarks x ensemble_sizes x targets x xi_values x repeats.
struct ExperimentPlan {
    Study study = Study::single;
    std::vector<std::size_t> landmarks{10};
    std::vector<std::size_t> ensemble_sizes{10};
    std::vector<double> xi_values{1.0};
    std::size_t repeats = 20;
    std::size_t targets = 3;
    std::uint64_t base_seed = 0;
    EnkfConfig cfg;
    double target_momentum_std = 1.0;
    double ensemble_low = -1.0;
    double ensemble_high = 1.0;
    /// Runs executed concurrently; 0 = hardware concurrency.
    std::size_t threads = 0;
    /// Empty: nothing is written.
    std::filesystem::path output_dir;

    static ExperimentPlan regularisation_defaults() {
        ExperimentPlan p;
        p.study = Study::regularisation;
        p.landmarks = {50};
        p.ensemble_sizes = {50};
        p.xi_values = {0.1, 1.0, 10.0};
        p.repeats = 1;
        p.targets = 3;
        return p;
    }

    static ExperimentPlan robustness_defaults() {
        ExperimentPlan p;
        p.study = Study::robustness;
        p.landmarks = {10, 50, 150};
        p.ensemble_sizes = {10, 50, 100};
        p.xi_values = {1.0};
        p.repeats = 20;
        p.targets = 3;
        return p;
    }

    void validate() const {
        if (landmarks.empty() || ensemble_sizes.empty() || xi_values.empty()) {
            throw InvalidInput("experiment plan: value lists must be non-empty");
        }
        if (repeats < 1 || targets < 1) { throw InvalidInput("experiment plan: repeats and targets must be >= 1"); }
        for (auto m : landmarks) {
            if (m < 1) { throw InvalidInput("experiment plan: landmark counts must be >= 1"); }
        }
        for (auto n : ensemble_sizes) {
            if (n < 2) { throw InvalidInput("experiment plan: ensemble sizes must be >= 2"); }
        }
        for (double xi : xi_values) {
            EnkfConfig c = cfg;
            c.xi = xi;
            c.validate();
        }
        cfg.validate();
    }
};

/// Order-sensitive 64-bit hash of integer coordinates: h <- mix64(h + gamma + v), h0 = 0.
inline std::uint64_t stable_hash(std::initializer_list<std::uint64_t> values) {
    std::uint64_t h = 0;
    for (auto v : values) { h = rng::mix64(h + rng::golden_gamma + v); }
    return h;
}

/// Target t for M landmarks is shared by every ensemble size, xi and repeat.
inline std::uint64_t target_seed(std::uint64_t base_seed, std::size_t landmarks, std::size_t target) {
    return base_seed + stable_hash({1, landmarks, target});
}

/// Initial ensemble for one cell; independent of xi so xi sweeps start from the same ensemble.
inline std::uint64_t ensemble_seed(std::uint64_t base_seed, std::size_t landmarks, std::size_t ensemble_size,
                                   std::size_t target, std::size_t repeat) {
    return base_seed + stable_hash({2, landmarks, ensemble_size, target, repeat});
}

struct RunJob {
    std::size_t landmarks = 10;
    std::size_t ensemble_size = 10;
    double xi = 1.0;
    std::size_t target = 0;
    std::size_t repeat = 0;
};

/// A finished run plus the shapes needed for overlays.
struct RunOutcome {
    RunRecord record;
    LandmarkSet q0;
    LandmarkSet q1;
    LandmarkSet matched;
};

/// One synthetic run. Failures are captured in the record (status "error"), never thrown.
inline RunOutcome run_job(const ExperimentPlan &plan, const RunJob &job, std::size_t inner_threads) {
    RunOutcome out;
    RunRecord &rec = out.record;
    EnkfConfig cfg = plan.cfg;
    cfg.xi = job.xi;
    cfg.threads = inner_threads;

    SynthSpec spec;
    spec.landmarks = job.landmarks;
    spec.ensemble_size = job.ensemble_size;
    spec.target_momentum_std = plan.target_momentum_std;
    spec.ensemble_low = plan.ensemble_low;
    spec.ensemble_high = plan.ensemble_high;

    const auto tseed = target_seed(plan.base_seed, job.landmarks, job.target);
    const auto eseed = ensemble_seed(plan.base_seed, job.landmarks, job.ensemble_size, job.target, job.repeat);
    try {
        spec.seed = tseed;
        SynthTarget target = make_target(spec, cfg);
        spec.seed = eseed;
        const Ensemble e0 = make_initial_ensemble(spec);
        out.q0 = target.q0;
        out.q1 = target.q1;
        MatchResult result = enkf_match(target.q0, target.q1, e0, cfg);
        rec = std::move(result.record);
        out.matched = std::move(result.final_prediction);
    } catch (const std::exception &err) {
        rec = RunRecord{};
        rec.config = cfg;
        rec.status = "error";
        rec.error = err.what();
    }
    rec.study = to_string(plan.study);
    rec.landmarks = job.landmarks;
    rec.ensemble_size = job.ensemble_size;
    rec.dim = 2;
    rec.target_index = job.target;
    rec.repeat = job.repeat;
    rec.target_seed = tseed;
    rec.ensemble_seed = eseed;
    rec.prng = std::string(rng::algorithm_name);
    return out;
}

/// Runs all jobs, in parallel across runs; the output order equals the job order.
inline std::vector<RunOutcome> run_jobs(const ExperimentPlan &plan, const std::vector<RunJob> &jobs) {
    std::vector<RunOutcome> outcomes(jobs.size());
    const std::size_t outer = std::min(resolve_threads(plan.threads), std::max<std::size_t>(jobs.size(), 1));
    // a lone run gets the threads instead
    const std::size_t inner = outer > 1 ? 1 : plan.cfg.threads;
    parallel_for(jobs.size(), outer, [&](std::size_t i) { outcomes[i] = run_job(plan, jobs[i], inner); });
    return outcomes;
}

inline std::string format_xi(double xi) { return io::format_double(xi); }

/// File-name stem for a record, e.g. run_M10_N10_xi1_t0_r3.
inline std::string record_label(const RunRecord &r) {
    return "run_M" + std::to_string(r.landmarks) + "_N" + std::to_string(r.ensemble_size) + "_xi" +
           format_xi(r.config.xi) + "_t" + std::to_string(r.target_index) + "_r" + std::to_string(r.repeat);
}

/// Writes, into output_dir:
///   <label>.csv      misfit trace (k,E) per record
///   records.json     {"runs": [RunRecord...]}
///   log_misfit.svg   all traces on one log-misfit chart
/// Duplicate labels get a numeric suffix. Returns the written paths.
inline std::vector<std::filesystem::path> emit_outputs(const std::vector<RunRecord> &records,
                                                       const std::filesystem::path &output_dir,
                                                       const std::string &title = "log data misfit") {
    namespace fs = std::filesystem;
    if (records.empty()) { throw InvalidInput("emit_outputs: no records"); }
    std::error_code ec;
    fs::create_directories(output_dir, ec);
    if (ec) { throw IoError("cannot create directory " + output_dir.string() + ": " + ec.message()); }

    std::vector<fs::path> written;
    std::set<std::string> used;
    std::vector<svg::NamedTrace> traces;
    auto runs = nlohmann::json::array();
    for (const auto &r : records) {
        std::string label = record_label(r);
        for (std::size_t n = 1; used.count(label) != 0; ++n) { label = record_label(r) + "_" + std::to_string(n); }
        used.insert(label);
        const fs::path csv = output_dir / (label + ".csv");
        auto out = io::detail::open_out(csv);
        io::write_trace_csv(out, r.trace);
        io::detail::finish(out, csv);
        written.push_back(csv);
        runs.push_back(io::to_json(r));
        traces.push_back({label, r.trace.values});
    }

    const fs::path json_path = output_dir / "records.json";
    {
        auto out = io::detail::open_out(json_path);
        out << nlohmann::json{{"runs", runs}}.dump(2) << '\n';
        io::detail::finish(out, json_path);
    }
    written.push_back(json_path);

    const fs::path svg_path = output_dir / "log_misfit.svg";
    {
        auto out = io::detail::open_out(svg_path);
        out << svg::log_misfit_plot(traces, title);
        io::detail::finish(out, svg_path);
    }
    written.push_back(svg_path);
    return written;
}

/// Template, target and matched shape as closed polygons.
inline void write_shape_overlay(const std::filesystem::path &path, const LandmarkSet &q0, const LandmarkSet &q1,
                                const LandmarkSet &matched, const std::string &title = "template / target / match") {
    std::vector<svg::NamedShape> shapes{{"template", q0, "#7f7f7f"}, {"target", q1, "#d62728"}};
    if (matched.size() > 0) { shapes.push_back({"matched", matched, "#1f77b4"}); }
    auto out = io::detail::open_out(path);
    out << svg::shape_overlay(shapes, title);
    io::detail::finish(out, path);
}

namespace detail {

// Groups outcomes by (M, N_E, target) and writes one directory per group.
inline void emit_grouped(const std::vector<RunOutcome> &outcomes, const std::filesystem::path &root,
                         const std::string &prefix) {
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<const RunOutcome *>> groups;
    for (const auto &o : outcomes) {
        groups[{o.record.landmarks, o.record.ensemble_size, o.record.target_index}].push_back(&o);
    }
    for (const auto &[key, members] : groups) {
        const auto &[m, n, t] = key;
        const std::string name =
            prefix + "_M" + std::to_string(m) + "_N" + std::to_string(n) + "_target" + std::to_string(t);
        std::vector<RunRecord> recs;
        for (const auto *o : members) { recs.push_back(o->record); }
        const auto dir = root / name;
        emit_outputs(recs, dir, "log data misfit, M=" + std::to_string(m) + ", N_E=" + std::to_string(n) +
                                    ", target " + std::to_string(t));
        for (const auto *o : members) {
            if (o->record.ok()) {
                write_shape_overlay(dir / "shapes.svg", o->q0, o->q1, o->matched);
                break;
            }
        }
    }
}

inline std::vector<RunRecord> records_of(const std::vector<RunOutcome> &outcomes) {
    std::vector<RunRecord> out;
    out.reserve(outcomes.size());
    for (const auto &o : outcomes) { out.push_back(o.record); }
    return out;
}

}  // namespace detail

/// Sweeps xi for every (M, N_E, target, repeat); each target gets its own
/// directory with one trace per xi.
inline std::vector<RunRecord> run_regularisation_study(const ExperimentPlan &plan) {
    if (plan.study != Study::regularisation) { throw InvalidInput("plan is not a regularisation study"); }
    plan.validate();
    std::vector<RunJob> jobs;
    for (auto m : plan.landmarks) {
        for (auto n : plan.ensemble_sizes) {
            for (std::size_t t = 0; t < plan.targets; ++t) {
                for (std::size_t r = 0; r < plan.repeats; ++r) {
                    for (double xi : plan.xi_values) { jobs.push_back({m, n, xi, t, r}); }
                }
            }
        }
    }
    const auto outcomes = run_jobs(plan, jobs);
    if (!plan.output_dir.empty()) { detail::emit_grouped(outcomes, plan.output_dir, "xi"); }
    return detail::records_of(outcomes);
}

/// Repeated random initial ensembles over the (M, N_E) grid at the plan's xi.
inline std::vector<RunRecord> run_robustness_study(const ExperimentPlan &plan) {
    if (plan.study != Study::robustness) { throw InvalidInput("plan is not a robustness study"); }
    plan.validate();
    std::vector<RunJob> jobs;
    for (auto m : plan.landmarks) {
        for (auto n : plan.ensemble_sizes) {
            for (std::size_t t = 0; t < plan.targets; ++t) {
                for (std::size_t r = 0; r < plan.repeats; ++r) { jobs.push_back({m, n, plan.cfg.xi, t, r}); }
            }
        }
    }
    const auto outcomes = run_jobs(plan, jobs);
    if (!plan.output_dir.empty()) { detail::emit_grouped(outcomes, plan.output_dir, "cell"); }
    return detail::records_of(outcomes);
}

}  // namespace lddmm
