#pragma once

// CSV / JSON serialization of experiment results, and atomic file output.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spikelab/montecarlo.hpp"

namespace spikelab {

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double value);

void write_replications_csv(std::ostream& out, const MonteCarloSummary& summary);
void write_aggregates_csv(std::ostream& out, const MonteCarloSummary& summary, const VerificationReport& report);
void write_pairwise_csv(std::ostream& out, const MonteCarloSummary& summary);

struct IndexedDensity {
    std::int64_t index;
    KdeResult result;
};
void write_kde_csv(std::ostream& out, std::span<const IndexedDensity> densities);

void write_sweep_csv(std::ostream& out, const ConvergenceTable& table);
void write_hdlss_draws_csv(std::ostream& out, const HdlssLimitSample& sample);

/// Values of one replication column for one index, in stream order.
std::vector<double> column_values(const MonteCarloSummary& summary, std::int64_t index, const std::string& column);

nlohmann::json to_json(const VerificationReport& report);
nlohmann::json to_json(const MonteCarloSummary& summary);
nlohmann::json to_json(const IdentityResiduals& residuals);

/// Collects output files and publishes them together: contents go to
/// temporary siblings and are renamed into place only by commit().
/// Uncommitted temporaries are removed on destruction.
class AtomicOutputs {
public:
    explicit AtomicOutputs(std::filesystem::path directory);
    ~AtomicOutputs();
    AtomicOutputs(const AtomicOutputs&) = delete;
    AtomicOutputs& operator=(const AtomicOutputs&) = delete;

    void add(const std::string& name, const std::string& content);
    void commit();

private:
    std::filesystem::path directory_;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;  // temp, final
    bool committed_ = false;
};

}  // namespace spikelab
