#include "spikelab/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <system_error>
#include <unistd.h>

namespace spikelab {

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, end);
}

void write_replications_csv(std::ostream& out, const MonteCarloSummary& summary) {
    out << "stream_id,index,tier,eigenvalue_ratio,angle_vector_deg,angle_subspace_deg\n";
    for (const ReplicationRow& row : summary.per_replication) {
        out << row.stream_id << ',' << row.index << ',' << row.tier << ',' << format_number(row.eigenvalue_ratio)
            << ',' << format_number(row.angle_vector_deg) << ',' << format_number(row.angle_subspace_deg) << '\n';
    }
}

void write_aggregates_csv(std::ostream& out, const MonteCarloSummary& summary, const VerificationReport& report) {
    out << "index,tier,metric,mean,median,std,predicted,tolerance,pass\n";
    auto emit = [&](const IndexAggregate& agg, const std::string& metric, const MetricStats& stats) {
        out << agg.index << ',' << agg.tier << ',' << metric << ',' << format_number(stats.mean) << ','
            << format_number(stats.median) << ',' << format_number(stats.std) << ',';
        const Criterion* match = nullptr;
        for (const Criterion& c : report.criteria) {
            if (c.index == agg.index && c.metric == metric) match = &c;
        }
        if (match != nullptr) {
            out << format_number(match->predicted) << ',' << format_number(match->tolerance) << ','
                << (match->pass ? "true" : "false");
        } else {
            out << ",,";
        }
        out << '\n';
    };
    for (const IndexAggregate& agg : summary.aggregates) {
        emit(agg, "eigenvalue_ratio", agg.eigenvalue_ratio);
        emit(agg, "angle_vector_deg", agg.angle_vector);
        emit(agg, "angle_subspace_deg", agg.angle_subspace);
        if (agg.tier == summary.noise_tier) emit(agg, "noise_scale", agg.noise_scale);
    }
}

void write_pairwise_csv(std::ostream& out, const MonteCarloSummary& summary) {
    out << "index,mean_pairwise_deg,std_pairwise_deg\n";
    for (const PairwiseStats& p : summary.pairwise) {
        out << p.index << ',' << format_number(p.mean_deg) << ',' << format_number(p.std_deg) << '\n';
    }
}

void write_kde_csv(std::ostream& out, std::span<const IndexedDensity> densities) {
    out << "index,grid_deg,density\n";
    for (const IndexedDensity& entry : densities) {
        if (entry.result.point_mass || !entry.result.curve) {
            // A point mass has no density; emit its location with an infinite value.
            out << entry.index << ',' << format_number(entry.result.point) << ",inf\n";
            continue;
        }
        const DensityCurve& curve = *entry.result.curve;
        for (std::size_t g = 0; g < curve.grid.size(); ++g) {
            out << entry.index << ',' << format_number(curve.grid[g]) << ',' << format_number(curve.density[g]) << '\n';
        }
    }
}

void write_sweep_csv(std::ostream& out, const ConvergenceTable& table) {
    out << "n,d,index,tier,lambda,predicted_deg,mean_angle_deg,mean_abs_deviation_deg\n";
    for (const SweepRow& row : table.rows) {
        out << row.n << ',' << row.d << ',' << row.index << ',' << row.tier << ',' << format_number(row.lambda) << ','
            << format_number(row.predicted_deg) << ',' << format_number(row.mean_angle_deg) << ','
            << format_number(row.mean_abs_deviation_deg) << '\n';
    }
}

void write_hdlss_draws_csv(std::ostream& out, const HdlssLimitSample& sample) {
    out << "draw,index,w_eigenvalue,eigenvalue_ratio,angle_deg\n";
    for (std::int64_t i = 0; i < sample.draws(); ++i) {
        for (Eigen::Index j = 0; j < sample.c.size(); ++j) {
            out << i << ',' << j + 1 << ',' << format_number(sample.w_eigenvalues(i, j)) << ','
                << format_number(sample.eigenvalue_ratio_draws(i, j)) << ','
                << format_number(sample.angle_draws_deg(i, j)) << '\n';
        }
    }
}

std::vector<double> column_values(const MonteCarloSummary& summary, std::int64_t index, const std::string& column) {
    std::vector<double> values;
    for (const ReplicationRow& row : summary.per_replication) {
        if (row.index != index) continue;
        if (column == "eigenvalue_ratio") {
            values.push_back(row.eigenvalue_ratio);
        } else if (column == "angle_vector_deg") {
            values.push_back(row.angle_vector_deg);
        } else if (column == "angle_subspace_deg") {
            values.push_back(row.angle_subspace_deg);
        } else {
            throw std::invalid_argument("unknown replication column '" + column + "'");
        }
    }
    return values;
}

namespace {

nlohmann::json number_or_string(double value) {
    if (std::isfinite(value)) return value;
    return format_number(value);
}

nlohmann::json to_json(const MetricStats& stats) {
    return {{"mean", number_or_string(stats.mean)},
            {"median", number_or_string(stats.median)},
            {"std", number_or_string(stats.std)},
            {"count", stats.count}};
}

}  // namespace

nlohmann::json to_json(const VerificationReport& report) {
    nlohmann::json doc;
    doc["pass"] = report.pass;
    doc["criteria"] = nlohmann::json::array();
    for (const Criterion& c : report.criteria) {
        doc["criteria"].push_back({{"name", c.name},
                                   {"index", c.index},
                                   {"metric", c.metric},
                                   {"predicted", number_or_string(c.predicted)},
                                   {"observed", number_or_string(c.observed)},
                                   {"tolerance", number_or_string(c.tolerance)},
                                   {"pass", c.pass}});
    }
    return doc;
}

nlohmann::json to_json(const MonteCarloSummary& summary) {
    nlohmann::json doc;
    doc["d"] = summary.d;
    doc["n"] = summary.n;
    doc["seed"] = summary.seed;
    doc["reps"] = summary.reps;
    doc["replications"] = nlohmann::json::array();
    for (const ReplicationRow& row : summary.per_replication) {
        doc["replications"].push_back({{"stream_id", row.stream_id},
                                       {"index", row.index},
                                       {"tier", row.tier},
                                       {"eigenvalue_ratio", number_or_string(row.eigenvalue_ratio)},
                                       {"angle_vector_deg", number_or_string(row.angle_vector_deg)},
                                       {"angle_subspace_deg", number_or_string(row.angle_subspace_deg)}});
    }
    doc["aggregates"] = nlohmann::json::array();
    for (const IndexAggregate& agg : summary.aggregates) {
        doc["aggregates"].push_back({{"index", agg.index},
                                     {"tier", agg.tier},
                                     {"eigenvalue_ratio", to_json(agg.eigenvalue_ratio)},
                                     {"noise_scale", to_json(agg.noise_scale)},
                                     {"angle_vector_deg", to_json(agg.angle_vector)},
                                     {"angle_subspace_deg", to_json(agg.angle_subspace)}});
    }
    doc["pairwise"] = nlohmann::json::array();
    for (const PairwiseStats& p : summary.pairwise) {
        doc["pairwise"].push_back({{"index", p.index},
                                   {"mean_pairwise_deg", number_or_string(p.mean_deg)},
                                   {"std_pairwise_deg", number_or_string(p.std_deg)},
                                   {"raw_mean_pairwise_deg", number_or_string(p.raw_mean_deg)},
                                   {"raw_std_pairwise_deg", number_or_string(p.raw_std_deg)}});
    }
    doc["identity_residuals"] = nlohmann::json::array();
    for (const ReplicationResiduals& r : summary.identity_residuals) {
        doc["identity_residuals"].push_back({{"stream_id", r.stream_id},
                                             {"trace", number_or_string(r.trace)},
                                             {"orthonormality", number_or_string(r.orthonormality)},
                                             {"projection_bound", number_or_string(r.projection_bound)}});
    }
    doc["failures"] = nlohmann::json::array();
    for (const ReplicationFailure& f : summary.failures) {
        doc["failures"].push_back({{"stream_id", f.stream_id}, {"message", f.message}});
    }
    return doc;
}

nlohmann::json to_json(const IdentityResiduals& r) {
    return {{"gram_identity", r.gram_identity},       {"diagonal", r.diagonal},
            {"trace", r.trace},                       {"orthonormality", r.orthonormality},
            {"projection_bound", r.projection_bound}, {"max", r.max()}};
}

AtomicOutputs::AtomicOutputs(std::filesystem::path directory) : directory_(std::move(directory)) {}

AtomicOutputs::~AtomicOutputs() {
    if (committed_) return;
    for (const auto& [temp, final_path] : staged_) {
        std::error_code ec;
        std::filesystem::remove(temp, ec);
    }
}

void AtomicOutputs::add(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(directory_);
    const std::filesystem::path final_path = directory_ / name;
    const std::filesystem::path temp = directory_ / ("." + name + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + temp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("failed writing " + temp.string());
    }
    staged_.emplace_back(temp, final_path);
}

void AtomicOutputs::commit() {
    for (const auto& [temp, final_path] : staged_) std::filesystem::rename(temp, final_path);
    committed_ = true;
}

}  // namespace spikelab
