// focalcal: fit, apply and evaluate focal temperature scaling on exported
// logits, and drive the numerical studies of the calibration map.

#include "focalcal/analysis.hpp"
#include "focalcal/core.hpp"
#include "focalcal/error.hpp"
#include "focalcal/fitting.hpp"
#include "focalcal/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace focalcal;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240531;

enum Exit { ok = 0, usage = 1, data = 2, verification = 3 };

json grid_json(const LogitGrid& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"step", g.step}}; }

json search_json(const TemperatureSearch& s) { return {{"t_min", s.t_min}, {"t_max", s.t_max}, {"steps", s.steps}}; }

json vec_json(const ProbVector& v) { return json(v); }

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v[i]);
    return s;
}

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// --- fit / apply / eval ----------------------------------------------------

struct FitArgs {
    std::string val;
    std::string method = "fts";
    std::string criterion = "ece";
    std::size_t bins = kDefaultBins;
    std::vector<double> gammas = GridSpec::default_gammas();
    std::vector<double> probes;
    double t_min = 0.01, t_max = 5.0, t_step = 0.01;
    std::string out;
    std::uint64_t seed = kDefaultSeed;
};

int run_fit(const FitArgs& a) {
    GridSpec grid;
    grid.gamma_values = a.gammas;
    grid.t_min = a.t_min;
    grid.t_max = a.t_max;
    grid.t_step = a.t_step;
    grid.criterion = criterion_from_string(a.criterion);
    grid.n_bins = a.bins;
    grid.validate();

    const LabeledLogits val = ingest_csv(a.val);
    FitResult fit;
    if (a.method == "ts") {
        fit = fit_temperature(val, grid);
    } else if (a.method == "fts") {
        fit = fit_focal_temperature(val, grid);
    } else if (a.method == "fts-line") {
        std::optional<std::pair<double, double>> probes;
        if (!a.probes.empty()) {
            if (a.probes.size() != 2) throw ParameterError("--probe-gammas takes exactly two values");
            probes = std::pair{a.probes[0], a.probes[1]};
        }
        fit = fit_focal_temperature_line(val, grid, probes);
    } else {
        throw ParameterError("unknown method '" + a.method + "'");
    }

    json j = to_json(fit);
    j["seed"] = a.seed;
    j["validation"] = a.val;
    j["evaluations"] = fit.trace.size();
    write_json_file(a.out, j);
    std::cout << "method=" << fit.method << " family=" << to_string(fit.best.family)
              << " gamma_ev=" << format_double(fit.best.gamma_ev)
              << " temperature=" << format_double(fit.best.temperature) << " " << to_string(grid.criterion) << "="
              << format_double(fit.criterion_value) << " evaluations=" << fit.trace.size() << "\n";
    return ok;
}

int run_apply(const std::string& params_path, const std::string& in, const std::string& out) {
    const CalibratorParams params = read_params_file(params_path);
    const LabeledLogits data = ingest_csv(in);
    std::ostringstream os;
    write_probabilities_csv(os, apply_calibrator(data, params));
    write_text_file(out, os.str());
    std::cout << "wrote " << data.size() << " rows to " << out << "\n";
    return ok;
}

// Accepts either a logits file (header logit_*) or an output of `apply`
// (header prob_*).
PredictionBatch load_predictions(const std::string& in, const std::optional<CalibratorParams>& params) {
    std::ifstream f(in, std::ios::binary);
    if (!f) throw IoError("cannot open " + in);
    std::string first;
    std::getline(f, first);
    f.seekg(0);
    if (first.rfind("prob_", 0) == 0 || first.rfind("\xEF\xBB\xBFprob_", 0) == 0) {
        if (params) throw ParameterError("--params cannot be combined with a probability file");
        // Same layout as a logits file; reuse the strict parser and relabel.
        std::stringstream rewritten;
        std::string line;
        std::getline(f, line);
        std::size_t pos = 0;
        while ((pos = line.find("prob_", pos)) != std::string::npos) line.replace(pos, 5, "logit_");
        rewritten << line << '\n' << f.rdbuf();
        const LabeledLogits rows = read_logits_csv(rewritten);
        return PredictionBatch(rows.n_classes(), rows.logits(), rows.labels());
    }
    const LabeledLogits data = read_logits_csv(f);
    return apply_calibrator(data, params.value_or(CalibratorParams::identity()));
}

int run_eval(const std::string& in, const std::string& params_path, std::size_t bins, const std::string& report,
             std::string reliability) {
    std::optional<CalibratorParams> params;
    if (!params_path.empty()) params = read_params_file(params_path);
    if (bins == 0) throw ParameterError("--bins must be positive");
    const PredictionBatch batch = load_predictions(in, params);
    const EvalReport r = make_report(batch, bins, params, in);

    if (reliability.empty()) reliability = fs::path(report).replace_extension(".reliability.csv").string();
    json j = to_json(r);
    j["reliability_csv"] = reliability;
    write_json_file(report, j);
    std::ostringstream os;
    write_bin_table_csv(os, r.bins);
    write_text_file(reliability, os.str());
    std::cout << "rows=" << r.rows << " accuracy=" << format_double(r.accuracy) << " nll=" << format_double(r.nll)
              << " ece=" << format_double(r.ece) << "\n";
    return ok;
}

// --- analyze ---------------------------------------------------------------

struct MatchArgs {
    std::size_t dim = 2;
    std::vector<double> gammas;
    LogitGrid grid;
    TemperatureSearch search;
    std::size_t max_points = kDefaultMaxSimplexPoints;
    std::string out;
};

int run_match(const MatchArgs& a) {
    prepare_dir(a.out);
    const LinearFit fit = linear_fit_gamma_invT(a.dim, a.gammas, a.grid, a.search, a.max_points);

    std::ostringstream csv;
    csv << "gamma,temperature,inverse_temperature,max_abs_error\n";
    json matches = json::array();
    for (const auto& m : fit.matches) {
        csv << format_double(m.gamma) << ',' << format_double(m.best_temperature) << ','
            << format_double(m.best_inverse_temperature) << ',' << format_double(m.max_abs_error) << '\n';
        matches.push_back({{"gamma", m.gamma},
                           {"temperature", m.best_temperature},
                           {"inverse_temperature", m.best_inverse_temperature},
                           {"max_abs_error", m.max_abs_error},
                           {"evaluations", m.evaluations}});
    }
    const auto& used = fit.matches.front();
    json summary = {{"dim", fit.dim},
                    {"slope", fit.slope},
                    {"intercept", fit.intercept},
                    {"rmse", fit.rmse},
                    {"max_abs_residual", fit.max_abs_residual},
                    {"line_fit", fit.method},
                    {"requested_logit_grid", grid_json(a.grid)},
                    {"logit_grid", grid_json(used.grid)},
                    {"points", used.points},
                    {"coarsened", used.coarsened},
                    {"max_points", a.max_points},
                    {"temperature_search", search_json(a.search)},
                    {"matches", matches}};
    write_text_file(fs::path(a.out) / "matches.csv", csv.str());
    write_json_file(fs::path(a.out) / "summary.json", summary);
    std::cout << "dim=" << fit.dim << " 1/T = " << format_double(fit.slope) << " * gamma + "
              << format_double(fit.intercept) << " (points=" << used.points
              << (used.coarsened ? ", grid coarsened" : "") << ")\n";
    return ok;
}

int run_bounds(const std::vector<double>& gammas, const LogitGrid& grid, double t_step, const std::string& out) {
    prepare_dir(out);
    std::ostringstream csv;
    csv << "gamma,theoretical_lower_T,theoretical_upper_T,experimental_lower_T,experimental_upper_T,violations\n";
    json rows = json::array();
    bool failed = false;
    for (double g : gammas) {
        const BoundResult b = bound_check(g, grid, t_step);
        csv << format_double(g) << ',' << format_double(b.theoretical_lower_T) << ','
            << format_double(b.theoretical_upper_T) << ',' << format_double(b.experimental_lower_T) << ','
            << format_double(b.experimental_upper_T) << ',' << b.violations << '\n';
        rows.push_back({{"gamma", g},
                        {"theoretical", {b.theoretical_lower_T, b.theoretical_upper_T}},
                        {"experimental", {b.experimental_lower_T, b.experimental_upper_T}},
                        {"points", b.points},
                        {"violations", b.violations},
                        {"witness", b.witness}});
        std::cout << "gamma=" << format_double(g) << " theoretical=(" << format_double(b.theoretical_lower_T) << ", "
                  << format_double(b.theoretical_upper_T) << ") experimental=("
                  << format_double(b.experimental_lower_T) << ", " << format_double(b.experimental_upper_T) << ")";
        if (!b.passed()) {
            failed = true;
            std::cout << " VIOLATION " << b.witness;
        }
        std::cout << "\n";
    }
    write_text_file(fs::path(out) / "bounds.csv", csv.str());
    write_json_file(fs::path(out) / "bounds.json",
                    {{"logit_grid", grid_json(grid)}, {"t_step", t_step}, {"bounds", rows}});
    return failed ? verification : ok;
}

int run_confidence(const std::vector<std::size_t>& dims, const std::vector<double>& gammas, std::size_t samples,
                   std::uint64_t seed, const std::string& out) {
    prepare_dir(out);
    const ConfidenceScan scan = confidence_raising_scan(dims, gammas, samples, seed);
    std::ostringstream csv;
    csv << "dim,gamma,samples,violations,min_margin\n";
    json rows = json::array();
    for (const auto& r : scan.rows) {
        csv << r.dim << ',' << format_double(r.gamma) << ',' << r.samples << ',' << r.violations << ','
            << format_double(r.min_margin) << '\n';
        rows.push_back({{"dim", r.dim},
                        {"gamma", r.gamma},
                        {"samples", r.samples},
                        {"violations", r.violations},
                        {"min_margin", r.min_margin},
                        {"witness", vec_json(r.witness)}});
        std::cout << "dim=" << r.dim << " gamma=" << format_double(r.gamma) << " violations=" << r.violations
                  << " min_margin=" << format_double(r.min_margin);
        if (r.violations) std::cout << " witness=" << join(r.witness);
        std::cout << "\n";
    }
    write_text_file(fs::path(out) / "confidence.csv", csv.str());
    write_json_file(fs::path(out) / "confidence.json",
                    {{"seed", scan.seed}, {"tolerance", kConfidenceTolerance}, {"rows", rows}});
    return scan.passed() ? ok : verification;
}

int run_properness(std::vector<ProbVector> truths, std::size_t random, const std::vector<std::size_t>& dims,
                   double gamma, double step, std::uint64_t seed, const std::string& out) {
    prepare_dir(out);
    for (std::size_t n : dims) {
        const auto extra = random_simplex_points(n, random, seed + n, 0.01);
        truths.insert(truths.end(), extra.begin(), extra.end());
    }
    if (truths.empty()) throw ParameterError("no ground truths given (use --truth or --random)");
    const PropernessScan scan = properness_scan(truths, gamma, step);

    std::ostringstream csv;
    csv << "truth,minimizer,linf,passed\n";
    json rows = json::array();
    for (const auto& r : scan.rows) {
        csv << join(r.truth) << ',' << join(r.minimizer) << ',' << format_double(r.linf) << ','
            << (r.passed ? 1 : 0) << '\n';
        rows.push_back(
            {{"truth", vec_json(r.truth)}, {"minimizer", vec_json(r.minimizer)}, {"linf", r.linf}, {"passed", r.passed}});
        if (!r.passed) std::cout << "FAILED truth=" << join(r.truth) << " minimizer=" << join(r.minimizer) << "\n";
    }
    write_text_file(fs::path(out) / "properness.csv", csv.str());
    write_json_file(fs::path(out) / "properness.json", {{"gamma", gamma},
                                                        {"step", step},
                                                        {"tolerance", 2.0 * step},
                                                        {"seed", seed},
                                                        {"random_per_dim", random},
                                                        {"rows", rows}});
    std::cout << "gamma=" << format_double(gamma) << " truths=" << scan.rows.size()
              << (scan.passed() ? " all minimisers on target" : " FAILED") << "\n";
    return scan.passed() ? ok : verification;
}

int run_landscape(const ProbVector& truth, double gamma, double step, const std::vector<double>& percentiles,
                  const std::string& out) {
    prepare_dir(out);
    const LandscapeTable t = loss_landscape_table(truth, gamma, step, percentiles);
    std::ostringstream csv;
    for (std::size_t k = 0; k < truth.size(); ++k) csv << "q_" << k << ',';
    csv << "brier,cross_entropy,focal,properized_focal\n";
    for (const auto& r : t.rows) {
        for (double x : r.q) csv << format_double(x) << ',';
        csv << format_double(r.risk[0]) << ',' << format_double(r.risk[1]) << ',' << format_double(r.risk[2]) << ','
            << format_double(r.risk[3]) << '\n';
    }
    json levels;
    for (std::size_t l = 0; l < kLandscapeLosses.size(); ++l) levels[kLandscapeLosses[l]] = t.levels[l];
    write_text_file(fs::path(out) / "landscape.csv", csv.str());
    write_json_file(fs::path(out) / "landscape.json", {{"truth", vec_json(truth)},
                                                       {"gamma", gamma},
                                                       {"step", step},
                                                       {"percentiles", t.percentiles},
                                                       {"levels", levels},
                                                       {"rows", t.rows.size()}});
    std::cout << "rows=" << t.rows.size() << "\n";
    return ok;
}

int run_minimizer(double p, double gamma, const std::string& out) {
    const double q = focal_risk_minimizer(p, gamma);
    const double recovered = focal_calib_binary(q, gamma);
    std::cout << "p=" << format_double(p) << " gamma=" << format_double(gamma) << " minimizer=" << format_double(q)
              << " recovered=" << format_double(recovered) << "\n";
    if (!out.empty()) {
        prepare_dir(out);
        write_json_file(fs::path(out) / "minimizer.json",
                        {{"p", p}, {"gamma", gamma}, {"minimizer", q}, {"recovered", recovered}});
    }
    return ok;
}

void add_logit_grid(CLI::App* cmd, LogitGrid& g) {
    cmd->add_option("--logit-lo", g.lo, "lower end of the open logit interval")->capture_default_str();
    cmd->add_option("--logit-hi", g.hi, "upper end of the open logit interval")->capture_default_str();
    cmd->add_option("--logit-step", g.step, "logit grid spacing")->capture_default_str();
}

void add_t_search(CLI::App* cmd, TemperatureSearch& s) {
    cmd->add_option("--t-min", s.t_min)->capture_default_str();
    cmd->add_option("--t-max", s.t_max)->capture_default_str();
    cmd->add_option("--t-steps", s.steps, "coarse-to-fine T steps")->delimiter(',')->capture_default_str();
}

std::vector<double> range(double lo, double hi, double step) {
    std::vector<double> v;
    for (int k = 0;; ++k) {
        const double x = std::round((lo + k * step) * 1e12) / 1e12;
        if (x > hi + 1e-12) break;
        v.push_back(x);
    }
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Focal temperature scaling: calibrate classifier logits and study the focal calibration map"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "select calibrator parameters on a validation file");
    fit_cmd->add_option("--val", fit.val, "validation logits CSV")->required();
    fit_cmd->add_option("--method", fit.method)->check(CLI::IsMember({"ts", "fts", "fts-line"}))->capture_default_str();
    fit_cmd->add_option("--criterion", fit.criterion)->check(CLI::IsMember({"ece", "nll"}))->capture_default_str();
    fit_cmd->add_option("--bins", fit.bins)->capture_default_str();
    fit_cmd->add_option("--gammas", fit.gammas, "comma-separated gamma_ev grid")->delimiter(',')->capture_default_str();
    fit_cmd->add_option("--probe-gammas", fit.probes, "two probe gammas for fts-line")->delimiter(',');
    fit_cmd->add_option("--t-min", fit.t_min)->capture_default_str();
    fit_cmd->add_option("--t-max", fit.t_max)->capture_default_str();
    fit_cmd->add_option("--t-step", fit.t_step)->capture_default_str();
    fit_cmd->add_option("--out", fit.out, "FitResult JSON")->required();
    fit_cmd->add_option("--seed", fit.seed, "recorded for reproducibility")->capture_default_str();

    std::string apply_params, apply_in, apply_out;
    auto* apply_cmd = app.add_subcommand("apply", "write calibrated probabilities");
    apply_cmd->add_option("--params", apply_params, "params JSON")->required();
    apply_cmd->add_option("--in", apply_in, "logits CSV")->required();
    apply_cmd->add_option("--out", apply_out, "probabilities CSV")->required();

    std::string eval_in, eval_params, eval_report, eval_reliability;
    std::size_t eval_bins = kDefaultBins;
    auto* eval_cmd = app.add_subcommand("eval", "accuracy, NLL and equal-mass ECE");
    eval_cmd->add_option("--in", eval_in, "logits CSV or probabilities CSV")->required();
    eval_cmd->add_option("--params", eval_params, "params JSON (default: plain softmax)");
    eval_cmd->add_option("--bins", eval_bins)->capture_default_str();
    eval_cmd->add_option("--report", eval_report, "report JSON")->required();
    eval_cmd->add_option("--reliability", eval_reliability, "reliability CSV (default: next to the report)");

    auto* analyze = app.add_subcommand("analyze", "numerical studies of the focal calibration map");
    analyze->require_subcommand(1);

    MatchArgs bfit;
    bfit.gammas = range(0.25, 5.0, 0.25);
    bfit.grid = {-20.0, 20.0, 0.01};
    auto* bfit_cmd = analyze->add_subcommand("binary-fit", "minimax match against temperature scaling, n = 2");
    bfit_cmd->add_option("--gammas", bfit.gammas)->delimiter(',')->capture_default_str();
    add_logit_grid(bfit_cmd, bfit.grid);
    add_t_search(bfit_cmd, bfit.search);
    bfit_cmd->add_option("--out", bfit.out, "output directory")->required();

    MatchArgs sfit;
    sfit.dim = 3;
    sfit.gammas = range(0.25, 10.0, 0.25);
    sfit.grid = {-5.0, 5.0, 0.02};
    auto* sfit_cmd = analyze->add_subcommand("simplex-fit", "minimax match against temperature scaling, n >= 3");
    sfit_cmd->add_option("--dim", sfit.dim)->check(CLI::Range(3, 4))->capture_default_str();
    sfit_cmd->add_option("--gammas", sfit.gammas)->delimiter(',')->capture_default_str();
    add_logit_grid(sfit_cmd, sfit.grid);
    add_t_search(sfit_cmd, sfit.search);
    sfit_cmd->add_option("--max-points", sfit.max_points, "grid size cap; the step doubles until it fits")
        ->capture_default_str();
    sfit_cmd->add_option("--out", sfit.out, "output directory")->required();

    std::vector<double> bound_gammas = {0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    LogitGrid bound_grid{-20.0, 20.0, 0.01};
    double bound_t_step = 0.001;
    std::string bound_out;
    auto* bound_cmd = analyze->add_subcommand("bounds", "temperature-scaling sandwich of the binary map");
    bound_cmd->add_option("--gamma,--gammas", bound_gammas)->delimiter(',')->capture_default_str();
    add_logit_grid(bound_cmd, bound_grid);
    bound_cmd->add_option("--t-step", bound_t_step)->capture_default_str();
    bound_cmd->add_option("--out", bound_out, "output directory")->required();

    std::vector<std::vector<double>> prop_truths;
    std::size_t prop_random = 0;
    std::vector<std::size_t> prop_dims = {2, 3};
    double prop_gamma = 1.0, prop_step = 0.001;
    std::uint64_t prop_seed = kDefaultSeed;
    std::string prop_out;
    auto* prop_cmd = analyze->add_subcommand("properness", "grid minimisation of the properized focal risk");
    prop_cmd->add_option("--truth", prop_truths, "ground truth, comma-separated; repeatable")
        ->delimiter(',')
        ->allow_extra_args(false);
    prop_cmd->add_option("--random", prop_random, "random truths per dimension")->capture_default_str();
    prop_cmd->add_option("--dims", prop_dims, "dimensions for random truths")->delimiter(',')->capture_default_str();
    prop_cmd->add_option("--gamma", prop_gamma)->capture_default_str();
    prop_cmd->add_option("--step", prop_step, "simplex grid spacing (1/k)")->capture_default_str();
    prop_cmd->add_option("--seed", prop_seed)->capture_default_str();
    prop_cmd->add_option("--out", prop_out, "output directory")->required();

    std::vector<std::size_t> conf_dims = {2, 3, 5, 10};
    std::vector<double> conf_gammas = {0.5, 1, 3, 7};
    std::size_t conf_samples = 100000;
    std::uint64_t conf_seed = kDefaultSeed;
    std::string conf_out;
    auto* conf_cmd = analyze->add_subcommand("confidence", "check that the map never lowers the top probability");
    conf_cmd->add_option("--dims", conf_dims)->delimiter(',')->capture_default_str();
    conf_cmd->add_option("--gammas", conf_gammas)->delimiter(',')->capture_default_str();
    conf_cmd->add_option("--samples", conf_samples)->capture_default_str();
    conf_cmd->add_option("--seed", conf_seed)->capture_default_str();
    conf_cmd->add_option("--out", conf_out, "output directory")->required();

    std::vector<double> land_truth = {0.55, 0.30, 0.15};
    double land_gamma = 1.0, land_step = 0.01;
    std::vector<double> land_pct = {3.0, 12.0, 20.0};
    std::string land_out;
    auto* land_cmd = analyze->add_subcommand("landscape", "conditional risk tables for isoline plots");
    land_cmd->add_option("--truth", land_truth)->delimiter(',')->capture_default_str();
    land_cmd->add_option("--gamma", land_gamma)->capture_default_str();
    land_cmd->add_option("--step", land_step)->capture_default_str();
    land_cmd->add_option("--percentiles", land_pct)->delimiter(',')->capture_default_str();
    land_cmd->add_option("--out", land_out, "output directory")->required();

    double min_p = 0.8, min_gamma = 2.0;
    std::string min_out;
    auto* min_cmd = analyze->add_subcommand("minimizer", "minimiser of the binary focal risk");
    min_cmd->add_option("--p", min_p)->capture_default_str();
    min_cmd->add_option("--gamma", min_gamma)->capture_default_str();
    min_cmd->add_option("--out", min_out, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : usage;
    }

    try {
        if (*fit_cmd) return run_fit(fit);
        if (*apply_cmd) return run_apply(apply_params, apply_in, apply_out);
        if (*eval_cmd) return run_eval(eval_in, eval_params, eval_bins, eval_report, eval_reliability);
        if (*bfit_cmd) return run_match(bfit);
        if (*sfit_cmd) return run_match(sfit);
        if (*bound_cmd) return run_bounds(bound_gammas, bound_grid, bound_t_step, bound_out);
        if (*prop_cmd) return run_properness(prop_truths, prop_random, prop_dims, prop_gamma, prop_step, prop_seed,
                                             prop_out);
        if (*conf_cmd) return run_confidence(conf_dims, conf_gammas, conf_samples, conf_seed, conf_out);
        if (*land_cmd) return run_landscape(land_truth, land_gamma, land_step, land_pct, land_out);
        if (*min_cmd) return run_minimizer(min_p, min_gamma, min_out);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const VerificationError& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return verification;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    }
    return usage;
}
