#pragma once

// Reproducible Gaussian data from a spike model.
//
// Observations are generated through the standardized factorization
// X = U Lambda^{1/2} Z^T + xi 1^T, where Z is an n x d array of i.i.d. N(0,1)
// draws. The covariance is never formed.

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include <Eigen/Dense>

#include "spikelab/model.hpp"

namespace spikelab {

/// Default cap on n*d for a single generated array.
inline constexpr std::int64_t kDefaultEntryBudget = 2'000'000'000;

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ZMatrix {
    Eigen::MatrixXd entries;  // n x d
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    std::int64_t n() const noexcept { return entries.rows(); }
    std::int64_t d() const noexcept { return entries.cols(); }
};

struct DataProvenance {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    bool centered = false;
};

/// Observation matrix with observations as columns (d x n).
struct DataMatrix {
    Eigen::MatrixXd columns;
    DataProvenance provenance;

    std::int64_t d() const noexcept { return columns.rows(); }
    std::int64_t n() const noexcept { return columns.cols(); }
};

/// n x d standard normal array, filled column by column from the Philox
/// stream keyed by (seed, stream_id).
ZMatrix sample_z(std::int64_t n, std::int64_t d, std::uint64_t seed, std::uint64_t stream_id,
                 std::int64_t entry_budget = kDefaultEntryBudget);

DataMatrix sample_data(const SpikeModel& model, const CovarianceSpec& covariance, const ZMatrix& z);
DataMatrix sample_data(const SpikeModel& model, const ZMatrix& z);

/// Haar-distributed d x d orthogonal matrix: QR of a Gaussian matrix with
/// diag(R) made positive. Only the first `columns` columns are computed
/// when columns < d; they equal the leading columns of the full matrix.
Eigen::MatrixXd random_orthogonal(std::int64_t d, std::uint64_t seed);
Eigen::MatrixXd random_orthonormal_columns(std::int64_t d, std::int64_t columns, std::uint64_t seed);

/// Subtracts the sample mean from every observation.
DataMatrix center(const DataMatrix& data);

/// Binary dump: 24-byte header ("SPKL", u32 version, u64 n, u64 d) followed
/// by n*d little-endian doubles, one observation after another.
void write_data_matrix(const DataMatrix& data, const std::filesystem::path& path);
DataMatrix read_data_matrix(const std::filesystem::path& path);

}  // namespace spikelab
