// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.
//
//   acceptance            run every criterion
//   acceptance 1 3 7      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spikelab/eigen.hpp"
#include "spikelab/limits.hpp"
#include "spikelab/model.hpp"
#include "spikelab/montecarlo.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/sampling.hpp"

using namespace spikelab;

namespace {

constexpr std::uint64_t kSeed = 42;

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void check(bool ok, const std::string& line) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + line);
    }
    void note(const std::string& line) { details.push_back("info " + line); }
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ModelConfig example_config(std::int64_t multiplicity) {
    ModelConfig c;
    c.d = 10000;
    c.n = 200;
    for (double r : {0.2, 0.4, 1.0}) c.tiers.push_back({multiplicity, CriticalRatio::finite(r), std::nullopt});
    return c;
}

const IndexAggregate& aggregate(const MonteCarloSummary& s, std::int64_t index) {
    for (const IndexAggregate& a : s.aggregates) {
        if (a.index == index) return a;
    }
    throw std::runtime_error("missing aggregate for index " + std::to_string(index));
}

const PairwiseStats& pairwise(const MonteCarloSummary& s, std::int64_t index) {
    for (const PairwiseStats& p : s.pairwise) {
        if (p.index == index) return p;
    }
    throw std::runtime_error("missing pairwise stats for index " + std::to_string(index));
}

// Criteria 1-3 share one run of the distinct-spike example.
struct ExampleRun {
    SpikeModel model;
    MonteCarloSummary summary;
    double seconds;
};

const ExampleRun& example_run() {
    static const ExampleRun run = [] {
        const SpikeModel model = build_model(example_config(1));
        RunOptions o;
        o.reps = 100;
        o.seed = kSeed;
        o.monitored_noise = 3;
        const auto start = std::chrono::steady_clock::now();
        MonteCarloSummary summary = run_replications(model, o);
        return ExampleRun{model, std::move(summary), seconds_since(start)};
    }();
    return run;
}

Outcome criterion_1() {
    Outcome out;
    const ExampleRun& run = example_run();
    const double targets[] = {24.0948, 32.3115, 45.0};
    const double c[] = {0.2, 0.4, 1.0};
    for (std::int64_t j = 1; j <= 3; ++j) {
        const double predicted = cone_angle_deg(CriticalRatio::finite(c[j - 1]));
        const double mean = aggregate(run.summary, j).angle_vector.mean;
        out.check(std::abs(predicted - targets[j - 1]) < 5e-5,
                  fmt("theta_%lld = %.6f deg matches %.4f", static_cast<long long>(j), predicted, targets[j - 1]));
        out.check(std::abs(mean - predicted) <= 2.0,
                  fmt("j=%lld mean angle %.4f deg vs %.4f (|diff| %.4f <= 2.0)", static_cast<long long>(j), mean,
                      predicted, std::abs(mean - predicted)));
    }
    out.check(run.seconds <= 300.0, fmt("runtime %.1f s <= 300 s", run.seconds));
    out.check(run.summary.failures.empty(), fmt("%zu failed replications", run.summary.failures.size()));
    return out;
}

Outcome criterion_2() {
    Outcome out;
    const ExampleRun& run = example_run();
    for (std::int64_t j = 1; j <= 3; ++j) {
        const PairwiseStats& p = pairwise(run.summary, j);
        out.check(p.mean_deg >= 88.0 && p.mean_deg <= 92.0,
                  fmt("j=%lld within-cone pairwise mean %.3f deg (sd %.3f) in [88, 92]", static_cast<long long>(j),
                      p.mean_deg, p.std_deg));
        out.note(fmt("j=%lld raw u_hat pairwise mean %.3f deg; arccos(1/(1+c)) = %.3f", static_cast<long long>(j),
                     p.raw_mean_deg, std::acos(1.0 / (1.0 + std::vector<double>{0.2, 0.4, 1.0}[j - 1])) * 180.0 / M_PI));
    }
    return out;
}

Outcome criterion_3() {
    Outcome out;
    const ExampleRun& run = example_run();
    const double ratios[] = {1.2, 1.4, 2.0};
    for (std::int64_t j = 1; j <= 3; ++j) {
        const double mean = aggregate(run.summary, j).eigenvalue_ratio.mean;
        const double rel = std::abs(mean - ratios[j - 1]) / ratios[j - 1];
        out.check(rel <= 0.05, fmt("j=%lld mean lambda_hat/lambda %.4f vs %.1f (rel %.4f <= 0.05)",
                                   static_cast<long long>(j), mean, ratios[j - 1], rel));
    }
    const double edge = std::pow(1.0 + std::sqrt(200.0 / 10000.0), 2.0);
    for (std::int64_t j = 4; j <= 6; ++j) {
        const double mean = aggregate(run.summary, j).noise_scale.mean;
        out.check(std::abs(mean - 1.0) <= 0.05,
                  fmt("j=%lld mean n lambda_hat/(d lambda) %.4f vs 1 (rel %.4f <= 0.05)", static_cast<long long>(j),
                      mean, std::abs(mean - 1.0)));
    }
    out.note(fmt("top of the noise bulk at n/d = 0.02 is (1 + sqrt(n/d))^2 = %.4f", edge));
    return out;
}

Outcome criterion_4() {
    Outcome out;
    const SpikeModel model = build_model(example_config(2));
    RunOptions o;
    o.reps = 100;
    o.seed = kSeed;
    o.monitored_noise = 0;
    o.collect_pairwise = false;
    const MonteCarloSummary s = run_replications(model, o);
    const double targets[] = {24.09, 32.31, 45.0};
    for (std::int64_t j = 1; j <= 6; ++j) {
        const double predicted = cone_angle_deg(model.tiers()[model.tier_of(j) - 1].ratio);
        const IndexAggregate& a = aggregate(s, j);
        out.check(std::abs(a.angle_subspace.mean - predicted) <= 2.0,
                  fmt("j=%lld (tier %zu) mean subspace angle %.4f deg vs %.4f (~%.2f); vector angle %.2f",
                      static_cast<long long>(j), a.tier, a.angle_subspace.mean, predicted, targets[a.tier - 1],
                      a.angle_vector.mean));
    }
    return out;
}

Outcome criterion_5() {
    Outcome out;
    const SpikeModel model = build_model(example_config(1));
    RunOptions o;
    o.reps = 50;
    o.seed = kSeed;
    o.monitored_noise = 0;
    o.collect_pairwise = false;
    const std::vector<std::int64_t> grid{50, 200, 1000};
    const auto start = std::chrono::steady_clock::now();
    const ConvergenceTable table = sweep(model, grid, 50.0, o);
    const double seconds = seconds_since(start);
    std::map<std::int64_t, std::vector<double>> deviations;
    for (const SweepRow& row : table.rows) {
        deviations[row.index].push_back(row.mean_abs_deviation_deg);
        out.note(fmt("n=%lld d=%lld j=%lld mean angle %.3f, mean |dev| %.3f", static_cast<long long>(row.n),
                     static_cast<long long>(row.d), static_cast<long long>(row.index), row.mean_angle_deg,
                     row.mean_abs_deviation_deg));
    }
    for (const auto& [index, dev] : deviations) {
        bool decreasing = dev.size() == grid.size();
        for (std::size_t i = 1; i < dev.size(); ++i) decreasing = decreasing && dev[i] < dev[i - 1];
        out.check(decreasing, fmt("j=%lld mean |dev| %.3f > %.3f > %.3f", static_cast<long long>(index), dev[0],
                                  dev[1], dev[2]));
    }
    out.check(seconds <= 1200.0, fmt("runtime %.1f s <= 1200 s", seconds));
    return out;
}

Outcome criterion_6() {
    Outcome out;
    ModelConfig c;
    c.d = 40000;
    c.n = 20;
    c.tiers = {{1, CriticalRatio::finite(2.0), std::nullopt}};
    const SpikeModel model = build_model(c);
    out.note(fmt("lambda = d/(n c) = %.1f", model.eigenvalue(1)));
    const HdlssLimitSample limits = hdlss_limit_sample(model, 100000, kSeed);
    RunOptions o;
    o.reps = 500;
    o.seed = kSeed;
    o.monitored_noise = 0;
    o.n_fixed = true;
    o.collect_pairwise = false;
    const MonteCarloSummary s = run_replications(model, o);
    const VerificationReport report = verify(s, limits);

    const Eigen::VectorXd draws = limits.eigenvalue_ratio_draws.col(0);
    const double draw_mean = draws.mean();
    const double draw_var = (draws.array() - draw_mean).square().sum() / static_cast<double>(draws.size() - 1);
    out.note(fmt("limit draws: mean %.4f (analytic 3), variance %.4f (analytic 0.1)", draw_mean, draw_var));
    for (const Criterion& k : report.criteria) {
        const bool angle = k.metric == "angle_subspace_deg";
        const double diff = angle ? std::abs(k.observed - k.predicted) : std::abs(k.observed - k.predicted) / k.predicted;
        out.check(k.pass, fmt("%s: simulated %.4f vs limit %.4f (%s %.4f <= %.2f)", k.name.c_str(), k.observed,
                              k.predicted, angle ? "|diff| deg" : "rel", diff, k.tolerance));
    }
    return out;
}

Outcome criterion_7() {
    Outcome out;
    const std::int64_t ns[] = {10, 200};
    const std::int64_t ds[] = {20, 10000};
    double worst = 0.0;
    std::string worst_at;
    int instance = 0;
    for (int rep = 0; rep < 5; ++rep) {
        for (std::int64_t n : ns) {
            for (std::int64_t d : ds) {
                ModelConfig c;
                c.d = d;
                c.n = n;
                // Spike sizes chosen so d / (n lambda) stays finite; varied per instance.
                const double top = 40.0 + 30.0 * rep;
                const std::int64_t cap = std::min(n, d);
                const std::int64_t q = 1 + rep % 2;
                if (2 * q + 1 <= cap) {
                    c.tiers = {{q, CriticalRatio::finite(static_cast<double>(d) / (static_cast<double>(n) * top)), std::nullopt},
                               {1, CriticalRatio::finite(static_cast<double>(d) / (static_cast<double>(n) * top / 4.0)), std::nullopt}};
                } else {
                    c.tiers = {{1, CriticalRatio::finite(static_cast<double>(d) / (static_cast<double>(n) * top)), std::nullopt}};
                }
                if (d <= kDenseLimit && rep % 2 == 1) c.basis = BasisSpec::random_orthogonal(100 + instance);
                const SpikeModel model = build_model(c);
                const IdentityResiduals r = identity_check(model, kSeed + static_cast<std::uint64_t>(instance));
                const double m = r.max();
                if (m > worst) {
                    worst = m;
                    worst_at = fmt("n=%lld d=%lld", static_cast<long long>(n), static_cast<long long>(d));
                }
                out.check(m <= 1e-7, fmt("instance %2d n=%3lld d=%5lld: gram %.1e diag %.1e trace %.1e orth %.1e bound %.1e",
                                         instance, static_cast<long long>(n), static_cast<long long>(d), r.gram_identity,
                                         r.diagonal, r.trace, r.orthonormality, r.projection_bound));
                ++instance;
            }
        }
    }
    out.note(fmt("worst residual %.2e at %s over %d instances", worst, worst_at.c_str(), instance));
    return out;
}

Outcome criterion_8() {
    Outcome out;
    RunOptions o;
    o.reps = 50;
    o.seed = kSeed;
    o.monitored_noise = 0;
    o.collect_pairwise = false;

    // (a) d/(n lambda) = 0.01 -> lambda = 5000.
    {
        ModelConfig c;
        c.d = 10000;
        c.n = 200;
        c.tiers = {{1, CriticalRatio::zero(), 5000.0}};
        const MonteCarloSummary s = run_replications(build_model(c), o);
        const double mean = aggregate(s, 1).angle_vector.mean;
        out.check(mean <= 10.0, fmt("(a) d/(n lambda) = 0.01: mean angle %.3f deg <= 10", mean));
    }
    // (b) d/(n lambda) = 100 at n = 200, d = 1e4 means lambda = 0.5, below the noise floor.
    {
        ModelConfig c;
        c.d = 10000;
        c.n = 200;
        c.tiers = {{1, CriticalRatio::infinity(), 0.5}};
        try {
            const MonteCarloSummary s = run_replications(build_model(c), o);
            const double mean = aggregate(s, 1).angle_vector.mean;
            out.check(mean >= 84.0, fmt("(b) d/(n lambda) = 100: mean angle %.3f deg >= 84", mean));
        } catch (const ModelError& e) {
            out.check(false, fmt("(b) d/(n lambda) = 100 at n=200, d=1e4 is not a spike model: %s", e.what()));
        }
        // Same ratio with a valid spike, for reference only.
        c.d = 30000;
        c.tiers = {{1, CriticalRatio::infinity(), 1.5}};
        const MonteCarloSummary s = run_replications(build_model(c), o);
        out.note(fmt("reference: n=200, d=3e4, lambda=1.5 (d/(n lambda) = 100): mean angle %.3f deg",
                     aggregate(s, 1).angle_vector.mean));
    }
    return out;
}

Outcome criterion_9() {
    Outcome out;
    ModelConfig c;
    c.d = 200;
    c.n = 200;
    c.tiers = {{1, CriticalRatio::zero(), 1e6}};
    RunOptions o;
    o.reps = 50;
    o.seed = kSeed;
    o.monitored_noise = 0;
    o.collect_pairwise = false;
    o.collect_scores = true;
    const MonteCarloSummary s = run_replications(build_model(c), o);
    std::vector<double> pooled = s.score_ratios.at(0);
    const std::size_t mid = pooled.size() / 2;
    std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(mid), pooled.end());
    double median = pooled[mid];
    if (pooled.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    out.check(std::abs(median - 1.0) <= 0.02,
              fmt("median |S_hat/S| over %zu (replication, i) pairs = %.5f (|diff| %.5f <= 0.02)", pooled.size(), median,
                  std::abs(median - 1.0)));
    return out;
}

Outcome criterion_10() {
    Outcome out;
    PhiloxStream dims(kSeed, 1000);
    double worst_value = 0.0;
    double worst_vector = 0.0;
    int compared = 0;
    for (int instance = 0; instance < 50; ++instance) {
        const auto d = static_cast<std::int64_t>(2 + dims.next_u64() % 499);
        const auto n = static_cast<std::int64_t>(2 + dims.next_u64() % 300);
        DataMatrix data;
        data.columns = sample_z(d, n, kSeed, 5000 + static_cast<std::uint64_t>(instance)).entries;
        // Give half of the instances a planted spike so both spiked and flat spectra are covered.
        if (instance % 2 == 0) data.columns.row(0) *= 10.0;
        const EigenResult direct = direct_eigen(data);
        const EigenResult gram = gram_eigen(data);
        const std::int64_t k = std::min(n, d);
        for (Eigen::Index j = 0; j < k; ++j) {
            worst_value = std::max(worst_value, std::abs(direct.eigenvalues(j) - gram.eigenvalues(j)) /
                                                    std::max(direct.eigenvalues(j), 1e-300 + direct.eigenvalues(0) * 1e-12));
        }
        for (Eigen::Index j = 0; j < std::min(direct.retained(), gram.retained()); ++j) {
            const double lj = direct.eigenvalues(j);
            const double gap_prev = j > 0 ? (direct.eigenvalues(j - 1) - lj) / direct.eigenvalues(j - 1) : INFINITY;
            const double gap_next = j + 1 < k ? (lj - direct.eigenvalues(j + 1)) / lj : INFINITY;
            if (std::min(gap_prev, gap_next) < 1e-6) continue;
            worst_vector = std::max(worst_vector, 1.0 - std::abs(direct.eigenvectors.col(j).dot(gram.eigenvectors.col(j))));
            ++compared;
        }
    }
    out.check(worst_value <= 1e-9, fmt("max relative eigenvalue difference %.2e <= 1e-9", worst_value));
    out.check(worst_vector <= 1e-8,
              fmt("min |<u_direct, u_gram>| = 1 - %.2e over %d separated pairs (>= 1 - 1e-8)", worst_vector, compared));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"distinct-spike angles", criterion_1},
        {"pairwise-angle randomness", criterion_2},
        {"eigenvalue ratios", criterion_3},
        {"tiered subspace angles", criterion_4},
        {"convergence sweep", criterion_5},
        {"fixed-n random limit", criterion_6},
        {"exact finite-sample identities", criterion_7},
        {"boundary behavior", criterion_8},
        {"PC-score consistency", criterion_9},
        {"direct/gram equivalence", criterion_10},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.contains(number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome.check(false, std::string("exception: ") + e.what());
        }
        failures += outcome.pass ? 0 : 1;
        std::printf("[%s] criterion %2d: %s (%.1f s)\n", outcome.pass ? "PASS" : "FAIL", number,
                    criteria[i].first.c_str(), seconds_since(start));
        for (const std::string& line : outcome.details) std::printf("         %s\n", line.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
