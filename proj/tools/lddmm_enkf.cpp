// Command-line front end: single matches, the two studies, and target generation.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <lddmm/lddmm.hpp>

namespace fs = std::filesystem;
using namespace lddmm;

namespace {

struct Options {
    std::string config_file;
    std::size_t iterations = 50;
    std::size_t timesteps = 15;
    double xi = 1.0;
    double tau = 1.0;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::size_t threads = 0;

    std::vector<std::size_t> landmarks;
    std::vector<std::size_t> ensemble_size;
    std::vector<double> xi_values;
    std::size_t repeats = 0;
    std::size_t targets = 0;
    double low = -1.0;
    double high = 1.0;
    double target_std = 1.0;
    std::string template_csv;
    std::string target_csv;
};

// Fills every option that was not given on the command line from the JSON file.
void apply_config_file(CLI::App &app, Options &o) {
    if (o.config_file.empty()) { return; }
    std::ifstream in(o.config_file);
    if (!in) { throw IoError("cannot open config file " + o.config_file); }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw IoError(o.config_file + ": " + e.what());
    }
    const auto take = [&](const char *key, const char *flag, auto &field) {
        if (!j.contains(key)) { return; }
        const auto *opt = app.get_option_no_throw(flag);
        if (opt != nullptr && opt->count() > 0) { return; }
        field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        take("iterations", "--iterations", o.iterations);
        take("timesteps", "--timesteps", o.timesteps);
        take("xi", "--xi", o.xi);
        take("tau", "--tau", o.tau);
        take("tol", "--tol", o.tol);
        take("seed", "--seed", o.seed);
        take("out", "--out", o.out);
        take("threads", "--threads", o.threads);
        take("landmarks", "--landmarks", o.landmarks);
        take("ensemble_size", "--ensemble-size", o.ensemble_size);
        take("xi_values", "--xi-values", o.xi_values);
        take("repeats", "--repeats", o.repeats);
        take("targets", "--targets", o.targets);
        take("low", "--low", o.low);
        take("high", "--high", o.high);
        take("target_std", "--target-std", o.target_std);
        take("template", "--template", o.template_csv);
        take("target", "--target", o.target_csv);
    } catch (const nlohmann::json::exception &e) {
        throw InvalidInput(o.config_file + ": " + e.what());
    }
}

EnkfConfig make_config(const Options &o) {
    EnkfConfig cfg;
    cfg.max_iterations = o.iterations;
    cfg.time_grid = TimeGrid(o.timesteps);
    cfg.xi = o.xi;
    cfg.kernel.tau = o.tau;
    cfg.tolerance = o.tol;
    cfg.threads = o.threads;
    cfg.validate();
    return cfg;
}

ExperimentPlan make_plan(const Options &o, ExperimentPlan plan) {
    plan.cfg = make_config(o);
    plan.base_seed = o.seed;
    plan.threads = o.threads;
    plan.output_dir = o.out;
    plan.ensemble_low = o.low;
    plan.ensemble_high = o.high;
    plan.target_momentum_std = o.target_std;
    if (!o.landmarks.empty()) { plan.landmarks = o.landmarks; }
    if (!o.ensemble_size.empty()) { plan.ensemble_sizes = o.ensemble_size; }
    if (!o.xi_values.empty()) { plan.xi_values = o.xi_values; }
    if (o.repeats > 0) { plan.repeats = o.repeats; }
    if (o.targets > 0) { plan.targets = o.targets; }
    plan.validate();
    return plan;
}

void report(const std::vector<RunRecord> &records) {
    for (const auto &r : records) {
        if (r.ok()) {
            std::printf("%s  E0=%.6g  E=%.6g  iterations=%zu%s\n", record_label(r).c_str(), r.trace.initial(),
                        r.trace.final(), r.trace.iterations_run, r.converged() ? "  converged" : "");
        } else {
            std::printf("%s  error: %s\n", record_label(r).c_str(), r.error.c_str());
        }
    }
}

int batch_status(const std::vector<RunRecord> &records) {
    std::size_t failed = 0;
    for (const auto &r : records) { failed += r.ok() ? 0 : 1; }
    if (failed > 0) { std::fprintf(stderr, "%zu of %zu runs failed\n", failed, records.size()); }
    return failed == records.size() ? 1 : 0;
}

int cmd_match(const Options &o) {
    const EnkfConfig cfg = make_config(o);
    const std::size_t n = o.ensemble_size.empty() ? 10 : o.ensemble_size.front();
    const fs::path dir = o.out;

    LandmarkSet q0;
    LandmarkSet q1;
    SynthSpec spec;
    spec.ensemble_size = n;
    spec.ensemble_low = o.low;
    spec.ensemble_high = o.high;
    spec.target_momentum_std = o.target_std;
    if (!o.template_csv.empty() || !o.target_csv.empty()) {
        if (o.template_csv.empty() || o.target_csv.empty()) {
            throw InvalidInput("--template and --target must be given together");
        }
        q0 = io::load_points_csv(o.template_csv);
        q1 = io::load_points_csv(o.target_csv);
        require_same_shape(q0, q1, "template/target");
        spec.landmarks = static_cast<std::size_t>(q0.size());
    } else {
        spec.landmarks = o.landmarks.empty() ? 10 : o.landmarks.front();
        spec.seed = target_seed(o.seed, spec.landmarks, 0);
        const auto t = make_target(spec, cfg);
        q0 = t.q0;
        q1 = t.q1;
    }
    spec.dim = static_cast<std::size_t>(q0.dim());
    spec.seed = ensemble_seed(o.seed, spec.landmarks, n, 0, 0);
    const Ensemble e0 = make_initial_ensemble(spec);

    RunRecord rec;
    LandmarkSet matched;
    MomentumSet momentum;
    try {
        auto result = enkf_match(q0, q1, e0, cfg);
        rec = std::move(result.record);
        matched = std::move(result.final_prediction);
        momentum = ensemble_mean(result.final);
    } catch (const std::exception &e) {
        rec.config = cfg;
        rec.status = "error";
        rec.error = e.what();
    }
    rec.landmarks = spec.landmarks;
    rec.ensemble_size = n;
    rec.dim = spec.dim;
    rec.ensemble_seed = spec.seed;
    rec.target_seed = o.target_csv.empty() ? target_seed(o.seed, spec.landmarks, 0) : 0;
    rec.prng = std::string(rng::algorithm_name);

    emit_outputs({rec}, dir, "log data misfit");
    write_shape_overlay(dir / "shapes.svg", q0, q1, matched);
    if (rec.ok()) {
        io::save_points_csv(dir / "matched.csv", matched);
        io::save_points_csv(dir / "momentum.csv", momentum);
    }
    report({rec});
    return rec.ok() ? 0 : 1;
}

int cmd_study(const Options &o, ExperimentPlan defaults) {
    const bool regularisation = defaults.study == Study::regularisation;
    const ExperimentPlan plan = make_plan(o, std::move(defaults));
    const auto records = regularisation ? run_regularisation_study(plan) : run_robustness_study(plan);
    report(records);
    return batch_status(records);
}

int cmd_make_target(const Options &o) {
    const EnkfConfig cfg = make_config(o);
    SynthSpec spec;
    spec.landmarks = o.landmarks.empty() ? 10 : o.landmarks.front();
    spec.target_momentum_std = o.target_std;
    spec.seed = target_seed(o.seed, spec.landmarks, 0);
    spec.validate();
    const auto t = make_target(spec, cfg);
    const fs::path dir = o.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) { throw IoError("cannot create directory " + dir.string() + ": " + ec.message()); }
    io::save_points_csv(dir / "template.csv", t.q0);
    io::save_points_csv(dir / "target.csv", t.q1);
    io::save_points_csv(dir / "true_momentum.csv", t.true_p0);
    const auto path = shoot(t.q0, t.true_p0, cfg.time_grid, cfg.kernel);
    {
        const fs::path p = dir / "target_path.csv";
        auto out = io::detail::open_out(p);
        io::write_path_csv(out, path);
        io::detail::finish(out, p);
    }
    write_shape_overlay(dir / "shapes.svg", t.q0, t.q1, LandmarkSet{}, "template / target");
    std::printf("wrote template.csv, target.csv, true_momentum.csv, target_path.csv, shapes.svg to %s\n",
                dir.string().c_str());
    return 0;
}

void add_common(CLI::App *cmd, Options &o) {
    cmd->add_option("--config", o.config_file, "JSON file with the same field names as the flags");
    cmd->add_option("--iterations", o.iterations, "maximum Kalman iterations")->capture_default_str();
    cmd->add_option("--timesteps", o.timesteps, "Euler steps on [0, 1]")->capture_default_str();
    cmd->add_option("--xi", o.xi, "observation noise scale")->capture_default_str();
    cmd->add_option("--tau", o.tau, "kernel width")->capture_default_str();
    cmd->add_option("--tol", o.tol, "stop when sqrt(E) <= tol")->capture_default_str();
    cmd->add_option("--seed", o.seed, "base seed")->capture_default_str();
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();
    cmd->add_option("--threads", o.threads, "worker threads (0 = auto)")->capture_default_str();
    cmd->add_option("--target-std", o.target_std, "std of the synthetic target momentum")->capture_default_str();
}

void add_ensemble_range(CLI::App *cmd, Options &o) {
    cmd->add_option("--low", o.low, "initial ensemble lower bound")->capture_default_str();
    cmd->add_option("--high", o.high, "initial ensemble upper bound")->capture_default_str();
}

void add_grid(CLI::App *cmd, Options &o) {
    cmd->add_option("--landmarks", o.landmarks, "landmark counts M");
    cmd->add_option("--ensemble-size", o.ensemble_size, "ensemble sizes N_E");
    cmd->add_option("--repeats", o.repeats, "ensembles per target");
    cmd->add_option("--targets", o.targets, "targets per landmark count");
    add_ensemble_range(cmd, o);
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Landmark matching with an iterative ensemble Kalman filter"};
    app.require_subcommand(1);
    Options o;

    auto *match = app.add_subcommand("match", "match one template to one target");
    add_common(match, o);
    match->add_option("--landmarks", o.landmarks, "landmark count M for a synthetic target")->expected(1);
    match->add_option("--ensemble-size", o.ensemble_size, "ensemble size N_E")->expected(1);
    match->add_option("--template", o.template_csv, "template landmark CSV");
    match->add_option("--target", o.target_csv, "target landmark CSV");
    add_ensemble_range(match, o);

    auto *study_xi = app.add_subcommand("study-xi", "regularisation study over xi");
    add_common(study_xi, o);
    add_grid(study_xi, o);
    study_xi->add_option("--xi-values", o.xi_values, "xi values (default 0.1 1 10)");

    auto *study_rob = app.add_subcommand("study-robustness", "repeated runs over M and N_E");
    add_common(study_rob, o);
    add_grid(study_rob, o);

    auto *make = app.add_subcommand("make-target", "write a synthetic template/target pair");
    add_common(make, o);
    make->add_option("--landmarks", o.landmarks, "landmark count M")->expected(1);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App *chosen = app.get_subcommands().front();
        apply_config_file(*chosen, o);
        if (chosen == match) { return cmd_match(o); }
        if (chosen == study_xi) { return cmd_study(o, ExperimentPlan::regularisation_defaults()); }
        if (chosen == study_rob) { return cmd_study(o, ExperimentPlan::robustness_defaults()); }
        return cmd_make_target(o);
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
