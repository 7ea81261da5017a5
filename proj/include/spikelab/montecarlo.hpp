#pragma once

// Seeded replication harness.
//
// Replication r draws its data from Philox stream r under the run seed, so
// a summary depends only on (model, options) and never on thread schedule.
// Per-replication rows are stored in stream order and every aggregate is
// recomputed from those rows.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spikelab/eigen.hpp"
#include "spikelab/limits.hpp"
#include "spikelab/model.hpp"
#include "spikelab/sampling.hpp"

namespace spikelab {

class MonteCarloError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunOptions {
    std::int64_t reps = 100;
    std::uint64_t seed = 42;
    std::int64_t monitored_noise = 3;
    unsigned threads = 0;  // 0: hardware concurrency
    bool n_fixed = false;  // HDLSS: spike angles are measured against span{u_1..u_m}
    bool center = false;
    bool collect_pairwise = true;
    bool collect_scores = false;
    std::int64_t entry_budget = kDefaultEntryBudget;
    /// Working-set cap used to limit concurrent replications.
    std::int64_t memory_budget_bytes = 3'000'000'000;
};

struct ReplicationRow {
    std::uint64_t stream_id;
    std::int64_t index;
    std::size_t tier;
    double eigenvalue_ratio;  // lambda_hat_j / lambda_j
    double angle_vector_deg;
    double angle_subspace_deg;
};

struct MetricStats {
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
    std::int64_t count = 0;
};

MetricStats describe(std::span<const double> values);

struct IndexAggregate {
    std::int64_t index;
    std::size_t tier;
    MetricStats eigenvalue_ratio;
    MetricStats noise_scale;  // n lambda_hat / (d lambda)
    MetricStats angle_vector;
    MetricStats angle_subspace;
};

/// Angles between replicated sample eigenvectors. For spike indices the
/// primary statistic uses the direction within the cone: u_hat_j with its
/// tier-subspace component removed. The raw u_hat_j angles are kept alongside;
/// they concentrate near arccos(1 / (1 + c)) rather than 90 degrees.
struct PairwiseStats {
    std::int64_t index;
    double mean_deg = 0.0;
    double std_deg = 0.0;
    std::int64_t pairs = 0;
    double raw_mean_deg = 0.0;
    double raw_std_deg = 0.0;
};

/// Identity residuals cheap enough to record on every replication.
struct ReplicationResiduals {
    std::uint64_t stream_id;
    double trace;
    double orthonormality;
    double projection_bound;  // NaN unless the population basis is the identity
};

struct ReplicationFailure {
    std::uint64_t stream_id;
    std::string message;
};

struct MonteCarloSummary {
    std::int64_t d = 0;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
    std::int64_t reps = 0;
    std::size_t noise_tier = 0;  // tier number carried by noise indices
    std::vector<std::int64_t> monitored;  // 1-based indices, spikes first
    std::vector<ReplicationRow> per_replication;
    std::vector<IndexAggregate> aggregates;
    std::vector<PairwiseStats> pairwise;
    std::vector<ReplicationResiduals> identity_residuals;
    std::vector<ReplicationFailure> failures;
    /// Pooled |sqrt(n) v_hat_{i,j} / S_{i,j}| over replications and observations,
    /// one entry per spike index (collect_scores only; flagged entries omitted).
    std::vector<std::vector<double>> score_ratios;
};

MonteCarloSummary run_replications(const SpikeModel& model, const RunOptions& options);

/// Per-index aggregates recomputed from rows.
std::vector<IndexAggregate> aggregate_rows(std::span<const ReplicationRow> rows, std::int64_t n, std::int64_t d);

struct SweepRow {
    std::int64_t n;
    std::int64_t d;
    std::int64_t index;
    std::size_t tier;
    double lambda;
    double predicted_deg;
    double mean_angle_deg;
    double mean_abs_deviation_deg;
};

struct ConvergenceTable {
    std::vector<SweepRow> rows;
    std::vector<MonteCarloSummary> summaries;
};

/// Runs the template model at each n with d = round(d_over_n * n), holding
/// every finite c fixed. Angles are vector angles for singleton tiers and
/// subspace angles for tiers with multiplicity > 1.
ConvergenceTable sweep(const SpikeModel& template_model, std::span<const std::int64_t> n_values, double d_over_n,
                       const RunOptions& options);

struct DensityCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};

struct KdeResult {
    std::optional<DensityCurve> curve;  // empty for a point mass
    bool point_mass = false;
    double point = 0.0;
};

/// Silverman's rule: 0.9 min(sd, IQR / 1.34) N^{-1/5}.
double silverman_bandwidth(std::span<const double> samples);

/// Gaussian kernel density on `grid_points` points spanning [min - 3h, max + 3h].
KdeResult kde(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
              std::int64_t grid_points = 512);

struct Tolerances {
    double angle_deg = 2.0;
    double pairwise_low_deg = 88.0;
    double pairwise_high_deg = 92.0;
    double ratio_rel = 0.05;
    double noise_scale_rel = 0.05;
    double zero_max_angle_deg = 10.0;
    double infinity_min_angle_deg = 84.0;
    double hdlss_mean_rel = 0.02;
    double hdlss_variance_rel = 0.15;
    double hdlss_angle_deg = 2.0;
};

struct Criterion {
    std::string name;
    std::int64_t index;
    std::string metric;
    double predicted;
    double observed;
    double tolerance;
    bool pass;
};

struct VerificationReport {
    std::vector<Criterion> criteria;
    bool pass = true;
};

VerificationReport verify(const MonteCarloSummary& summary, const LimitPrediction& prediction,
                          const Tolerances& tolerances = {});
VerificationReport verify(const MonteCarloSummary& summary, const HdlssLimitSample& limits,
                          const Tolerances& tolerances = {});

/// One replication (stream 0) checked against the exact finite-sample identities.
IdentityResiduals identity_check(const SpikeModel& model, std::uint64_t seed);
/// Same, for a caller-supplied Z.
IdentityResiduals identity_check(const SpikeModel& model, const ZMatrix& z);

}  // namespace spikelab
