#include "spikelab/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "spikelab/parallel.hpp"

namespace spikelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> values) {
    if (values.empty()) return kNaN;
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ReplicationOutput {
    std::vector<ReplicationRow> rows;
    Eigen::MatrixXd vectors;     // d x monitored, for pairwise angles
    Eigen::MatrixXd directions;  // spike columns projected off their tier subspace
    ReplicationResiduals residuals{};
    std::vector<std::vector<double>> score_ratios;
    std::optional<std::string> error;
};

}  // namespace

MetricStats describe(std::span<const double> values) {
    MetricStats stats;
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
    }
    stats.count = static_cast<std::int64_t>(finite.size());
    if (finite.empty()) {
        stats.mean = stats.median = stats.std = kNaN;
        return stats;
    }
    stats.mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
    double ss = 0.0;
    for (double v : finite) ss += (v - stats.mean) * (v - stats.mean);
    stats.std = finite.size() > 1 ? std::sqrt(ss / static_cast<double>(finite.size() - 1)) : 0.0;
    stats.median = median_of(std::move(finite));
    return stats;
}

std::vector<IndexAggregate> aggregate_rows(std::span<const ReplicationRow> rows, std::int64_t n, std::int64_t d) {
    struct Columns {
        std::size_t tier = 0;
        std::vector<double> ratio, angle_vector, angle_subspace;
    };
    std::map<std::int64_t, Columns> by_index;
    for (const ReplicationRow& row : rows) {
        Columns& col = by_index[row.index];
        col.tier = row.tier;
        col.ratio.push_back(row.eigenvalue_ratio);
        col.angle_vector.push_back(row.angle_vector_deg);
        col.angle_subspace.push_back(row.angle_subspace_deg);
    }
    const double n_over_d = static_cast<double>(n) / static_cast<double>(d);
    std::vector<IndexAggregate> out;
    for (auto& [index, col] : by_index) {
        std::vector<double> noise_scale(col.ratio.size());
        std::transform(col.ratio.begin(), col.ratio.end(), noise_scale.begin(),
                       [&](double r) { return r * n_over_d; });
        out.push_back({index, col.tier, describe(col.ratio), describe(noise_scale), describe(col.angle_vector),
                       describe(col.angle_subspace)});
    }
    return out;
}

MonteCarloSummary run_replications(const SpikeModel& model, const RunOptions& options) {
    if (options.reps < 1) throw MonteCarloError("reps must be >= 1");
    if (options.monitored_noise < 0) throw MonteCarloError("monitored noise count must be >= 0");
    const std::int64_t n = model.n();
    const std::int64_t d = model.d();
    if (n > options.entry_budget / d) {
        throw MonteCarloError("n*d = " + std::to_string(n) + "*" + std::to_string(d) +
                              " exceeds the memory budget of " + std::to_string(options.entry_budget) + " entries");
    }

    const std::int64_t m = model.m();
    const std::int64_t rank = std::min(n, d) - (options.center ? 1 : 0);
    const std::int64_t count = std::min(m + options.monitored_noise, rank);
    if (count < m) throw MonteCarloError("rank of the sample covariance is below the number of spikes");

    const CovarianceSpec covariance = population_covariance(model);

    MonteCarloSummary summary;
    summary.d = d;
    summary.n = n;
    summary.seed = options.seed;
    summary.reps = options.reps;
    summary.noise_tier = model.tier_count() + 1;
    for (std::int64_t j = 1; j <= count; ++j) summary.monitored.push_back(j);

    // Z, X and the Gram/eigenvector scratch dominate each replication's footprint.
    const double per_rep_bytes = 3.0 * static_cast<double>(n) * static_cast<double>(d) * sizeof(double);
    const auto memory_cap =
        static_cast<unsigned>(std::max(1.0, static_cast<double>(options.memory_budget_bytes) / per_rep_bytes));
    const unsigned threads = std::min(resolve_threads(options.threads), memory_cap);

    std::vector<ReplicationOutput> outputs(static_cast<std::size_t>(options.reps));
    parallel_for(options.reps, threads, [&](std::int64_t r) {
        ReplicationOutput& out = outputs[static_cast<std::size_t>(r)];
        const auto stream = static_cast<std::uint64_t>(r);
        try {
            ZMatrix z = sample_z(n, d, options.seed, stream, options.entry_budget);
            Eigen::VectorXd z_mean_sq;
            if (covariance.is_identity()) {
                z_mean_sq = z.entries.leftCols(std::min(count, d)).colwise().squaredNorm().transpose() /
                            static_cast<double>(n);
            }
            const DataMatrix data = sample_data(model, covariance, z);
            z.entries.resize(0, 0);

            EigenOptions eig_options;
            eig_options.center = options.center;
            eig_options.max_vectors = options.collect_scores ? std::max(count, m) : count;
            // Both paths agree to 1e-8; pick the cheaper one (n^2 d against d^3).
            const EigenResult eig = n < d ? gram_eigen(data, eig_options) : direct_eigen(data, eig_options);
            if (eig.retained() < count) {
                throw EigenError("only " + std::to_string(eig.retained()) + " sample eigenpairs retained, " +
                                 std::to_string(count) + " monitored");
            }
            const AngleReport angles = angle_report(model, covariance, eig, count, options.n_fixed);

            for (std::int64_t j = 1; j <= count; ++j) {
                out.rows.push_back({stream, j, model.tier_of(j), eig.eigenvalues(j - 1) / model.eigenvalue(j),
                                    angles.vector_angles(j - 1), angles.subspace_angles(j - 1)});
            }
            if (options.collect_pairwise) {
                out.vectors = eig.eigenvectors.leftCols(count);
                out.directions = out.vectors;
                const std::vector<IndexSet> sets = index_sets(model);
                for (std::int64_t j = 1; j <= std::min(count, m); ++j) {
                    const IndexSet& set = sets[model.tier_of(j) - 1];
                    const auto basis = covariance.spike_vectors().middleCols(set.first - 1, set.size());
                    auto direction = out.directions.col(j - 1);
                    direction -= basis * (basis.transpose() * direction);
                    direction.normalize();
                }
            }

            out.residuals.stream_id = stream;
            const double energy = data.columns.squaredNorm() / static_cast<double>(n);
            out.residuals.trace = std::abs(eig.eigenvalues.sum() - energy) / energy;
            const Eigen::MatrixXd gram = eig.eigenvectors.transpose() * eig.eigenvectors;
            out.residuals.orthonormality =
                (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
            out.residuals.projection_bound = kNaN;
            if (covariance.is_identity() && !options.center && !model.has_mean()) {
                double worst = 0.0;
                for (std::int64_t j = 0; j < count; ++j) {
                    const double lhs = eig.eigenvalues(j) * eig.eigenvectors(j, j) * eig.eigenvectors(j, j);
                    const double rhs = model.eigenvalue(j + 1) * z_mean_sq(j);
                    worst = std::max(worst, std::max(0.0, lhs - rhs) / rhs);
                }
                out.residuals.projection_bound = worst;
            }

            if (options.collect_scores) {
                const Eigen::MatrixXd population = population_scores(model, covariance, data);
                const ScoreRatios ratios = score_ratios(eig, population);
                out.score_ratios.resize(static_cast<std::size_t>(m));
                for (std::int64_t j = 0; j < m; ++j) {
                    for (Eigen::Index i = 0; i < n; ++i) {
                        if (!ratios.flagged(i, j)) out.score_ratios[static_cast<std::size_t>(j)].push_back(ratios.ratios(i, j));
                    }
                }
            }
        } catch (const std::exception& e) {
            out.rows.clear();
            out.error = e.what();
        }
    });

    std::vector<Eigen::MatrixXd> vectors_by_index(static_cast<std::size_t>(count));
    std::vector<Eigen::MatrixXd> directions_by_index(static_cast<std::size_t>(count));
    std::vector<Eigen::Index> filled(static_cast<std::size_t>(count), 0);
    if (options.collect_pairwise) {
        for (auto& v : vectors_by_index) v.resize(d, options.reps);
        for (auto& v : directions_by_index) v.resize(d, options.reps);
    }
    if (options.collect_scores) summary.score_ratios.resize(static_cast<std::size_t>(m));

    for (ReplicationOutput& out : outputs) {
        if (out.error) {
            summary.failures.push_back({static_cast<std::uint64_t>(&out - outputs.data()), *out.error});
            continue;
        }
        summary.per_replication.insert(summary.per_replication.end(), out.rows.begin(), out.rows.end());
        summary.identity_residuals.push_back(out.residuals);
        if (options.collect_pairwise) {
            for (std::int64_t j = 0; j < count; ++j) {
                const auto slot = static_cast<std::size_t>(j);
                vectors_by_index[slot].col(filled[slot]) = out.vectors.col(j);
                directions_by_index[slot].col(filled[slot]++) = out.directions.col(j);
            }
        }
        for (std::size_t j = 0; j < out.score_ratios.size(); ++j) {
            summary.score_ratios[j].insert(summary.score_ratios[j].end(), out.score_ratios[j].begin(),
                                           out.score_ratios[j].end());
        }
        out = ReplicationOutput{};
    }

    // More than 1% failed replications invalidates the run.
    if (static_cast<double>(summary.failures.size()) > 0.01 * static_cast<double>(options.reps)) {
        throw MonteCarloError(std::to_string(summary.failures.size()) + " of " + std::to_string(options.reps) +
                              " replications failed; first: " + summary.failures.front().message);
    }

    summary.aggregates = aggregate_rows(summary.per_replication, n, d);

    if (options.collect_pairwise) {
        auto upper_stats = [](const Eigen::MatrixXd& vectors) {
            const Eigen::MatrixXd angles = pairwise_angles(vectors);
            std::vector<double> upper;
            for (Eigen::Index a = 0; a < angles.rows(); ++a) {
                for (Eigen::Index b = a + 1; b < angles.cols(); ++b) upper.push_back(angles(a, b));
            }
            return describe(upper);
        };
        for (std::int64_t j = 0; j < count; ++j) {
            const auto slot = static_cast<std::size_t>(j);
            const MetricStats within = upper_stats(directions_by_index[slot].leftCols(filled[slot]));
            const MetricStats raw = upper_stats(vectors_by_index[slot].leftCols(filled[slot]));
            summary.pairwise.push_back({j + 1, within.mean, within.std, within.count, raw.mean, raw.std});
        }
    }
    return summary;
}

ConvergenceTable sweep(const SpikeModel& template_model, std::span<const std::int64_t> n_values, double d_over_n,
                       const RunOptions& options) {
    if (n_values.empty()) throw MonteCarloError("sweep needs at least one n");
    if (!(d_over_n > 0.0)) throw MonteCarloError("d/n must be positive");
    if (!std::is_sorted(n_values.begin(), n_values.end())) throw MonteCarloError("n values must be ascending");

    std::vector<SpikeModel> models;
    for (std::int64_t n : n_values) {
        ModelConfig config = template_model.config();
        config.n = n;
        config.d = std::llround(d_over_n * static_cast<double>(n));
        if (config.d < 1 || n > options.entry_budget / config.d) {
            throw MonteCarloError("sweep point n = " + std::to_string(n) + ", d = " + std::to_string(config.d) +
                                  " exceeds the memory budget of " + std::to_string(options.entry_budget) +
                                  " entries");
        }
        if (config.mean && config.mean->size() != config.d) config.mean.reset();
        models.push_back(build_model(config));
    }

    ConvergenceTable table;
    for (const SpikeModel& model : models) {
        const LimitPrediction prediction = predict(model, classify_regime(model, false));
        MonteCarloSummary summary = run_replications(model, options);
        for (const IndexLimit& limit : prediction.spikes) {
            const bool singleton = model.tiers()[limit.tier - 1].multiplicity == 1;
            double sum_angle = 0.0;
            double sum_dev = 0.0;
            std::int64_t count = 0;
            for (const ReplicationRow& row : summary.per_replication) {
                if (row.index != limit.index) continue;
                const double angle = singleton ? row.angle_vector_deg : row.angle_subspace_deg;
                sum_angle += angle;
                sum_dev += std::abs(angle - limit.angle_limit_deg);
                ++count;
            }
            const double denom = static_cast<double>(std::max<std::int64_t>(count, 1));
            table.rows.push_back({model.n(), model.d(), limit.index, limit.tier, model.eigenvalue(limit.index),
                                  limit.angle_limit_deg, sum_angle / denom, sum_dev / denom});
        }
        table.summaries.push_back(std::move(summary));
    }
    return table;
}

double silverman_bandwidth(std::span<const double> samples) {
    const MetricStats stats = describe(samples);
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = stats.std;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
}

KdeResult kde(std::span<const double> samples, std::optional<double> bandwidth, std::int64_t grid_points) {
    if (samples.size() < 2) throw std::invalid_argument("kde needs at least two samples");
    if (grid_points < 2) throw std::invalid_argument("kde needs at least two grid points");
    for (double v : samples) {
        if (!std::isfinite(v)) throw std::invalid_argument("kde samples must be finite");
    }
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    KdeResult result;
    if (*lo_it == *hi_it) {
        result.point_mass = true;
        result.point = *lo_it;
        return result;
    }
    const double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("kde bandwidth must be positive");

    DensityCurve curve;
    curve.bandwidth = h;
    const double lo = *lo_it - 3.0 * h;
    const double hi = *hi_it + 3.0 * h;
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * 3.14159265358979323846));
    curve.grid.resize(static_cast<std::size_t>(grid_points));
    curve.density.assign(static_cast<std::size_t>(grid_points), 0.0);
    for (std::int64_t g = 0; g < grid_points; ++g) curve.grid[static_cast<std::size_t>(g)] = lo + step * static_cast<double>(g);

    // Kernels beyond 8h contribute below 1e-14 relative and are skipped.
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t g = 0; g < curve.grid.size(); ++g) {
        const double x = curve.grid[g];
        auto first = std::lower_bound(sorted.begin(), sorted.end(), x - 8.0 * h);
        auto last = std::upper_bound(first, sorted.end(), x + 8.0 * h);
        double sum = 0.0;
        for (auto it = first; it != last; ++it) {
            const double u = (x - *it) / h;
            sum += std::exp(-0.5 * u * u);
        }
        curve.density[g] = sum * norm;
    }
    result.curve = std::move(curve);
    return result;
}

namespace {

const IndexAggregate* find_aggregate(const MonteCarloSummary& summary, std::int64_t index) {
    for (const IndexAggregate& agg : summary.aggregates) {
        if (agg.index == index) return &agg;
    }
    return nullptr;
}

const PairwiseStats* find_pairwise(const MonteCarloSummary& summary, std::int64_t index) {
    for (const PairwiseStats& p : summary.pairwise) {
        if (p.index == index) return &p;
    }
    return nullptr;
}

Criterion absolute(std::string name, std::int64_t index, std::string metric, double predicted, double observed,
                   double tolerance) {
    const bool pass = std::isfinite(observed) && std::abs(observed - predicted) <= tolerance;
    return {std::move(name), index, std::move(metric), predicted, observed, tolerance, pass};
}

Criterion relative(std::string name, std::int64_t index, std::string metric, double predicted, double observed,
                   double tolerance) {
    const bool pass = std::isfinite(observed) && std::abs(observed - predicted) <= tolerance * std::abs(predicted);
    return {std::move(name), index, std::move(metric), predicted, observed, tolerance, pass};
}

std::string indexed(const std::string& name, std::int64_t index) { return name + "[" + std::to_string(index) + "]"; }

VerificationReport finish(std::vector<Criterion> criteria) {
    VerificationReport report;
    report.criteria = std::move(criteria);
    report.pass = std::all_of(report.criteria.begin(), report.criteria.end(), [](const Criterion& c) { return c.pass; });
    return report;
}

}  // namespace

VerificationReport verify(const MonteCarloSummary& summary, const LimitPrediction& prediction,
                          const Tolerances& tol) {
    std::vector<Criterion> criteria;
    for (const IndexLimit& limit : prediction.spikes) {
        const IndexAggregate* agg = find_aggregate(summary, limit.index);
        if (agg == nullptr) {
            throw MonteCarloError("summary has no measurements for spike index " + std::to_string(limit.index));
        }
        const IndexSet& set = prediction.tier_map.at(limit.tier - 1);
        const bool singleton = set.size() == 1;
        switch (limit.c.kind()) {
            case CriticalRatio::Kind::Finite:
                if (singleton) {
                    criteria.push_back(absolute(indexed("angle_vector", limit.index), limit.index, "angle_vector_deg",
                                                limit.angle_limit_deg, agg->angle_vector.mean, tol.angle_deg));
                } else {
                    criteria.push_back(absolute(indexed("angle_subspace", limit.index), limit.index,
                                                "angle_subspace_deg", limit.angle_limit_deg, agg->angle_subspace.mean,
                                                tol.angle_deg));
                }
                criteria.push_back(relative(indexed("eigenvalue_ratio", limit.index), limit.index, "eigenvalue_ratio",
                                            limit.ratio_limit, agg->eigenvalue_ratio.mean, tol.ratio_rel));
                break;
            case CriticalRatio::Kind::Zero: {
                const double observed = singleton ? agg->angle_vector.mean : agg->angle_subspace.mean;
                criteria.push_back({indexed("angle_consistent", limit.index), limit.index,
                                    singleton ? "angle_vector_deg" : "angle_subspace_deg", 0.0, observed,
                                    tol.zero_max_angle_deg,
                                    std::isfinite(observed) && observed <= tol.zero_max_angle_deg});
                criteria.push_back(relative(indexed("eigenvalue_ratio", limit.index), limit.index, "eigenvalue_ratio",
                                            1.0, agg->eigenvalue_ratio.mean, tol.ratio_rel));
                break;
            }
            case CriticalRatio::Kind::Infinity: {
                const double observed = agg->angle_vector.mean;
                criteria.push_back({indexed("angle_inconsistent", limit.index), limit.index, "angle_vector_deg", 90.0,
                                    observed, 90.0 - tol.infinity_min_angle_deg,
                                    std::isfinite(observed) && observed >= tol.infinity_min_angle_deg});
                break;
            }
        }
        const bool random_direction = limit.c.kind() == CriticalRatio::Kind::Infinity ||
                                      (limit.c.kind() == CriticalRatio::Kind::Finite && singleton);
        if (random_direction) {
            if (const PairwiseStats* pw = find_pairwise(summary, limit.index)) {
                const double half = 0.5 * (tol.pairwise_high_deg - tol.pairwise_low_deg);
                const double mid = 0.5 * (tol.pairwise_high_deg + tol.pairwise_low_deg);
                criteria.push_back({indexed("pairwise", limit.index), limit.index, "pairwise_deg", mid, pw->mean_deg,
                                    half,
                                    pw->mean_deg >= tol.pairwise_low_deg && pw->mean_deg <= tol.pairwise_high_deg});
            }
        }
    }
    for (const IndexAggregate& agg : summary.aggregates) {
        if (agg.tier != summary.noise_tier) continue;
        criteria.push_back(relative(indexed("noise_scale", agg.index), agg.index, "noise_scale",
                                    prediction.noise.eigenvalue_scale, agg.noise_scale.mean, tol.noise_scale_rel));
    }
    return finish(std::move(criteria));
}

VerificationReport verify(const MonteCarloSummary& summary, const HdlssLimitSample& limits, const Tolerances& tol) {
    std::vector<Criterion> criteria;
    const std::int64_t m = limits.c.size();
    for (std::int64_t j = 1; j <= m; ++j) {
        const IndexAggregate* agg = find_aggregate(summary, j);
        if (agg == nullptr) throw MonteCarloError("summary has no measurements for spike index " + std::to_string(j));

        std::vector<double> ratio_draws(static_cast<std::size_t>(limits.draws()));
        std::vector<double> angle_draws(static_cast<std::size_t>(limits.draws()));
        for (std::int64_t i = 0; i < limits.draws(); ++i) {
            ratio_draws[static_cast<std::size_t>(i)] = limits.eigenvalue_ratio_draws(i, j - 1);
            angle_draws[static_cast<std::size_t>(i)] = limits.angle_draws_deg(i, j - 1);
        }
        const MetricStats ratio_limit = describe(ratio_draws);
        const MetricStats angle_limit = describe(angle_draws);

        criteria.push_back(relative(indexed("hdlss_ratio_mean", j), j, "eigenvalue_ratio", ratio_limit.mean,
                                    agg->eigenvalue_ratio.mean, tol.hdlss_mean_rel));
        criteria.push_back(relative(indexed("hdlss_ratio_variance", j), j, "eigenvalue_ratio_variance",
                                    ratio_limit.std * ratio_limit.std,
                                    agg->eigenvalue_ratio.std * agg->eigenvalue_ratio.std, tol.hdlss_variance_rel));
        criteria.push_back(absolute(indexed("hdlss_angle_mean", j), j, "angle_subspace_deg", angle_limit.mean,
                                    agg->angle_subspace.mean, tol.hdlss_angle_deg));
    }
    return finish(std::move(criteria));
}

IdentityResiduals identity_check(const SpikeModel& model, const ZMatrix& z) {
    const CovarianceSpec covariance = population_covariance(model);
    const DataMatrix data = sample_data(model, covariance, z);
    const EigenResult eig = sample_eigen(data);
    return finite_sample_identities(model, covariance, z, data, eig);
}

IdentityResiduals identity_check(const SpikeModel& model, std::uint64_t seed) {
    return identity_check(model, sample_z(model.n(), model.d(), seed, 0));
}

}  // namespace spikelab
