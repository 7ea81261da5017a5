#include "spikelab/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spikelab/config.hpp"
#include "spikelab/limits.hpp"
#include "spikelab/model.hpp"
#include "spikelab/montecarlo.hpp"
#include "spikelab/report.hpp"

namespace spikelab {
namespace {

constexpr double kIdentityTolerance = 1e-8;

/// Raised for malformed input other than the model config itself.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::int64_t> d;
    std::optional<std::int64_t> n;
    std::optional<double> min_spike;
    std::int64_t reps = 100;
    std::uint64_t seed = 42;
    std::int64_t monitored_noise = 3;
    std::optional<unsigned> threads;
    std::string out;
    std::string format = "csv";
    std::vector<std::int64_t> n_values{50, 100, 200, 500, 1000, 2000};
    double d_over_n = 50.0;
    std::int64_t draws = 100000;
    bool center = false;
    double tolerance = kIdentityTolerance;
    std::string in;
    std::string column = "angle_vector_deg";
    std::int64_t index = 1;
    std::optional<double> bandwidth;
};

unsigned thread_count(const Options& opts) {
    if (opts.threads) return *opts.threads;
    if (const char* env = std::getenv("SPIKELAB_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long value = std::strtoul(env, &end, 10);
        if (end == env || *end != '\0') throw UsageError("SPIKELAB_THREADS: not a non-negative integer: " + std::string(env));
        return static_cast<unsigned>(value);
    }
    return 0;
}

SpikeModel load_model(const Options& opts) {
    ModelConfig config = load_model_config(opts.config);
    if (opts.d) config.d = *opts.d;
    if (opts.n) config.n = *opts.n;
    if (opts.min_spike) config.min_spike = *opts.min_spike;
    return build_model(config);
}

RunOptions run_options(const Options& opts, bool n_fixed) {
    RunOptions run;
    run.reps = opts.reps;
    run.seed = opts.seed;
    run.monitored_noise = opts.monitored_noise;
    run.threads = thread_count(opts);
    run.n_fixed = n_fixed;
    run.center = opts.center;
    return run;
}

template <typename Writer>
std::string render(Writer&& writer) {
    std::ostringstream out;
    writer(out);
    return out.str();
}

/// Publishes files to --out, or prints them to stdout when no directory is given.
void publish(const Options& opts, const std::vector<std::pair<std::string, std::string>>& files, std::ostream& out) {
    if (opts.out.empty()) {
        for (const auto& [name, content] : files) {
            if (files.size() > 1) out << "# " << name << '\n';
            out << content;
        }
        return;
    }
    AtomicOutputs outputs(opts.out);
    for (const auto& [name, content] : files) outputs.add(name, content);
    outputs.commit();
}

void warn(const SpikeModel& model, std::ostream& err) {
    for (const std::string& w : model.warnings()) err << "warning: " << w << '\n';
}

int cmd_predict(const Options& opts, std::ostream& out, std::ostream& err) {
    const SpikeModel model = load_model(opts);
    warn(model, err);
    const RegimeReport regime = classify_regime(model, false);
    const LimitPrediction prediction = predict(model, regime);
    nlohmann::json doc;
    doc["regime"] = to_string(regime.regime);
    doc["applicable"] = regime.applicable_theorems;
    doc["predictions"] = to_json(prediction);
    doc["noise"] = {{"eigenvalue_scale", prediction.noise.eigenvalue_scale},
                    {"vector_rate", prediction.noise.vector_rate},
                    {"subspace_angle_deg", prediction.noise.subspace_angle_deg}};
    publish(opts, {{"predictions.json", doc.dump(2) + "\n"}}, out);
    return kExitOk;
}

std::vector<IndexedDensity> spike_densities(const SpikeModel& model, const MonteCarloSummary& summary) {
    std::vector<IndexedDensity> densities;
    for (std::int64_t j : summary.monitored) {
        if (j > model.m()) continue;
        const bool singleton = model.tiers()[model.tier_of(j) - 1].multiplicity == 1;
        const std::vector<double> values =
            column_values(summary, j, singleton ? "angle_vector_deg" : "angle_subspace_deg");
        densities.push_back({j, kde(values)});
    }
    return densities;
}

int cmd_simulate(const Options& opts, std::ostream& out, std::ostream& err) {
    const SpikeModel model = load_model(opts);
    warn(model, err);
    const LimitPrediction prediction = predict(model, classify_regime(model, false));
    const MonteCarloSummary summary = run_replications(model, run_options(opts, false));
    const VerificationReport report = verify(summary, prediction);
    for (const ReplicationFailure& f : summary.failures) {
        err << "warning: replication " << f.stream_id << " failed: " << f.message << '\n';
    }

    std::vector<std::pair<std::string, std::string>> files;
    if (opts.format == "json") {
        nlohmann::json doc = to_json(summary);
        doc["verification"] = to_json(report);
        files.emplace_back("summary.json", doc.dump(2) + "\n");
    } else {
        const std::vector<IndexedDensity> densities = spike_densities(model, summary);
        files.emplace_back("replications.csv", render([&](std::ostream& s) { write_replications_csv(s, summary); }));
        files.emplace_back("aggregates.csv",
                           render([&](std::ostream& s) { write_aggregates_csv(s, summary, report); }));
        files.emplace_back("kde.csv", render([&](std::ostream& s) { write_kde_csv(s, densities); }));
        files.emplace_back("pairwise.csv", render([&](std::ostream& s) { write_pairwise_csv(s, summary); }));
    }
    files.emplace_back("verification.json", to_json(report).dump(2) + "\n");
    publish(opts, files, out);
    return report.pass ? kExitOk : kExitVerificationFailed;
}

int cmd_sweep(const Options& opts, std::ostream& out, std::ostream& err) {
    const SpikeModel model = load_model(opts);
    warn(model, err);
    RunOptions run = run_options(opts, false);
    run.collect_pairwise = false;
    const ConvergenceTable table = sweep(model, opts.n_values, opts.d_over_n, run);

    // Mean absolute deviation must fall strictly along the n grid for every spike index.
    bool decreasing = true;
    nlohmann::json checks = nlohmann::json::array();
    for (std::int64_t j = 1; j <= model.m(); ++j) {
        std::vector<double> deviations;
        for (const SweepRow& row : table.rows) {
            if (row.index == j) deviations.push_back(row.mean_abs_deviation_deg);
        }
        bool ok = true;
        for (std::size_t i = 1; i < deviations.size(); ++i) ok = ok && deviations[i] < deviations[i - 1];
        decreasing = decreasing && ok;
        checks.push_back({{"index", j}, {"strictly_decreasing", ok}});
    }

    std::vector<std::pair<std::string, std::string>> files;
    if (opts.format == "json") {
        nlohmann::json rows = nlohmann::json::array();
        for (const SweepRow& row : table.rows) {
            rows.push_back({{"n", row.n},
                            {"d", row.d},
                            {"index", row.index},
                            {"tier", row.tier},
                            {"lambda", row.lambda},
                            {"predicted_deg", row.predicted_deg},
                            {"mean_angle_deg", row.mean_angle_deg},
                            {"mean_abs_deviation_deg", row.mean_abs_deviation_deg}});
        }
        files.emplace_back("sweep.json", nlohmann::json{{"rows", rows}, {"checks", checks}}.dump(2) + "\n");
    } else {
        files.emplace_back("sweep.csv", render([&](std::ostream& s) { write_sweep_csv(s, table); }));
    }
    publish(opts, files, out);
    return decreasing ? kExitOk : kExitVerificationFailed;
}

int cmd_hdlss(const Options& opts, std::ostream& out, std::ostream& err) {
    const SpikeModel model = load_model(opts);
    warn(model, err);
    const unsigned threads = thread_count(opts);
    const HdlssLimitSample limits = hdlss_limit_sample(model, opts.draws, opts.seed, threads);
    const MonteCarloSummary summary = run_replications(model, run_options(opts, true));
    const VerificationReport report = verify(summary, limits);

    std::vector<std::pair<std::string, std::string>> files;
    if (opts.format == "json") {
        nlohmann::json doc = to_json(summary);
        doc["verification"] = to_json(report);
        files.emplace_back("summary.json", doc.dump(2) + "\n");
    } else {
        files.emplace_back("hdlss_draws.csv", render([&](std::ostream& s) { write_hdlss_draws_csv(s, limits); }));
        files.emplace_back("replications.csv", render([&](std::ostream& s) { write_replications_csv(s, summary); }));
        files.emplace_back("aggregates.csv",
                           render([&](std::ostream& s) { write_aggregates_csv(s, summary, report); }));
    }
    files.emplace_back("verification.json", to_json(report).dump(2) + "\n");
    publish(opts, files, out);
    return report.pass ? kExitOk : kExitVerificationFailed;
}

int cmd_check(const Options& opts, std::ostream& out, std::ostream& err) {
    const SpikeModel model = load_model(opts);
    warn(model, err);
    const IdentityResiduals residuals = identity_check(model, opts.seed);
    nlohmann::json doc = to_json(residuals);
    doc["tolerance"] = opts.tolerance;
    doc["pass"] = residuals.max() <= opts.tolerance;
    publish(opts, {{"identities.json", doc.dump(2) + "\n"}}, out);
    return residuals.max() <= opts.tolerance ? kExitOk : kExitVerificationFailed;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& text, const std::string& where) {
    if (text == "nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) throw UsageError(where + ": not a number: '" + text + "'");
    return value;
}

int cmd_kde(const Options& opts, std::ostream& out, std::ostream&) {
    std::ifstream in(opts.in);
    if (!in) throw UsageError("in: cannot open " + opts.in);
    std::string line;
    if (!std::getline(in, line)) throw UsageError("in: empty file " + opts.in);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    auto column_of = [&](const std::string& name, const std::string& key) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw UsageError(key + ": no column '" + name + "' in " + opts.in);
    };
    const std::size_t index_col = column_of("index", "in");
    const std::size_t value_col = column_of(opts.column, "column");

    std::vector<double> values;
    std::int64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        const std::string where = "in:" + std::to_string(line_no);
        if (fields.size() != header.size()) throw UsageError(where + ": expected " + std::to_string(header.size()) + " fields");
        if (parse_double(fields[index_col], where) != static_cast<double>(opts.index)) continue;
        const double v = parse_double(fields[value_col], where);
        if (std::isfinite(v)) values.push_back(v);
    }
    if (values.empty()) throw UsageError("index: no finite values for index " + std::to_string(opts.index));
    const std::vector<IndexedDensity> densities{{opts.index, kde(values, opts.bandwidth)}};
    publish(opts, {{"kde.csv", render([&](std::ostream& s) { write_kde_csv(s, densities); })}}, out);
    return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    Options opts;
    CLI::App app{"Spiked covariance PCA: limit predictions and Monte Carlo verification", "spikelab"};
    app.require_subcommand(1);

    auto add_model = [&](CLI::App* cmd, bool n_override = true) {
        cmd->add_option("--config", opts.config, "JSON model configuration")->required();
        cmd->add_option("--d", opts.d, "Override the dimension d");
        if (n_override) cmd->add_option("--n", opts.n, "Override the sample size n");
        cmd->add_option("--min-spike", opts.min_spike, "Override the minimum spike eigenvalue");
    };
    auto add_run = [&](CLI::App* cmd) {
        cmd->add_option("--reps", opts.reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
        cmd->add_option("--monitored-noise", opts.monitored_noise, "Noise indices tracked after the spikes")
            ->capture_default_str()
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--threads", opts.threads, "Worker cap (default: SPIKELAB_THREADS, else all cores)");
        cmd->add_flag("--center", opts.center, "Center the data before PCA");
    };
    auto add_output = [&](CLI::App* cmd, bool with_format) {
        cmd->add_option("--out", opts.out, "Output directory (default: stdout)");
        if (with_format) {
            cmd->add_option("--format", opts.format, "Output format")
                ->capture_default_str()
                ->check(CLI::IsMember({"csv", "json"}));
        }
    };

    CLI::App* predict_cmd = app.add_subcommand("predict", "Print the theoretical limits as JSON");
    add_model(predict_cmd);
    add_output(predict_cmd, false);

    CLI::App* simulate_cmd = app.add_subcommand("simulate", "Run replications and verify against the limits");
    add_model(simulate_cmd);
    add_run(simulate_cmd);
    add_output(simulate_cmd, true);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Convergence table over a grid of n at fixed d/n");
    add_model(sweep_cmd, false);
    add_run(sweep_cmd);
    add_output(sweep_cmd, true);
    sweep_cmd->add_option("--n", opts.n_values, "Sample sizes, ascending")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--d-over-n", opts.d_over_n, "Dimension to sample size ratio")->capture_default_str();

    CLI::App* hdlss_cmd = app.add_subcommand("hdlss", "Random n-fixed limits against a finite-d simulation");
    add_model(hdlss_cmd);
    add_run(hdlss_cmd);
    add_output(hdlss_cmd, true);
    hdlss_cmd->add_option("--draws", opts.draws, "Draws from the limiting distribution")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    CLI::App* check_cmd = app.add_subcommand("check", "Check the exact finite-sample identities on one replication");
    add_model(check_cmd);
    add_output(check_cmd, false);
    check_cmd->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
    check_cmd->add_option("--tolerance", opts.tolerance, "Largest admissible residual")->capture_default_str();

    CLI::App* kde_cmd = app.add_subcommand("kde", "Kernel density of one replications.csv column");
    kde_cmd->add_option("--in", opts.in, "replications.csv")->required();
    kde_cmd->add_option("--column", opts.column, "Column to smooth")->capture_default_str();
    kde_cmd->add_option("--index", opts.index, "Index to select")->capture_default_str();
    kde_cmd->add_option("--bandwidth", opts.bandwidth, "Kernel bandwidth (default: Silverman)")
        ->check(CLI::PositiveNumber);
    add_output(kde_cmd, false);

    std::vector<std::string> argv_store{"spikelab"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const std::string& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (predict_cmd->parsed()) return cmd_predict(opts, out, err);
        if (simulate_cmd->parsed()) return cmd_simulate(opts, out, err);
        if (sweep_cmd->parsed()) return cmd_sweep(opts, out, err);
        if (hdlss_cmd->parsed()) return cmd_hdlss(opts, out, err);
        if (check_cmd->parsed()) return cmd_check(opts, out, err);
        if (kde_cmd->parsed()) return cmd_kde(opts, out, err);
    } catch (const ModelError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace spikelab
