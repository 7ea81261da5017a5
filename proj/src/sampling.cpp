#include "spikelab/sampling.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "spikelab/rng.hpp"

namespace spikelab {

static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");

namespace {

// Basis draws live in the upper half of the stream space so they never
// collide with replication streams under the same seed.
constexpr std::uint64_t kBasisStream = 0x8000'0000'0000'0000ull;

constexpr char kMagic[4] = {'S', 'P', 'K', 'L'};
constexpr std::uint32_t kDumpVersion = 1;

}  // namespace

ZMatrix sample_z(std::int64_t n, std::int64_t d, std::uint64_t seed, std::uint64_t stream_id,
                 std::int64_t entry_budget) {
    if (n < 1 || d < 1) throw SamplingError("sample_z needs n >= 1 and d >= 1");
    if (n > entry_budget / d) {
        throw SamplingError("n*d = " + std::to_string(n) + "*" + std::to_string(d) + " exceeds the memory budget of " +
                            std::to_string(entry_budget) + " entries");
    }
    ZMatrix z;
    z.seed = seed;
    z.stream_id = stream_id;
    z.entries.resize(n, d);
    PhiloxStream stream(seed, stream_id);
    double* out = z.entries.data();
    const std::int64_t total = n * d;
    for (std::int64_t i = 0; i < total; ++i) out[i] = stream.next_normal();
    return z;
}

DataMatrix sample_data(const SpikeModel& model, const CovarianceSpec& covariance, const ZMatrix& z) {
    if (z.n() != model.n() || z.d() != model.d()) {
        throw SamplingError("Z is " + std::to_string(z.n()) + "x" + std::to_string(z.d()) + " but the model needs " +
                            std::to_string(model.n()) + "x" + std::to_string(model.d()));
    }
    const Eigen::VectorXd& lambda = covariance.spike_eigenvalues();
    const Eigen::Index m = lambda.size();

    DataMatrix data;
    data.provenance = {z.seed, z.stream_id, false};
    if (covariance.is_identity()) {
        data.columns = z.entries.transpose();
        for (Eigen::Index j = 0; j < m; ++j) data.columns.row(j) *= std::sqrt(lambda(j));
    } else if (covariance.has_full_basis()) {
        Eigen::MatrixXd scaled = z.entries.transpose();
        for (Eigen::Index j = 0; j < m; ++j) scaled.row(j) *= std::sqrt(lambda(j));
        data.columns.noalias() = covariance.basis() * scaled;
    } else {
        // (I + U_m (Lambda_m^{1/2} - I) U_m^T) Z^T; equals U Lambda^{1/2} (Z U)^T
        // for any orthonormal completion U of U_m.
        const Eigen::MatrixXd& um = covariance.spike_vectors();
        data.columns = z.entries.transpose();
        Eigen::MatrixXd coords = um.transpose() * data.columns;
        const Eigen::VectorXd excess = lambda.array().sqrt() - 1.0;
        coords = excess.asDiagonal() * coords;
        data.columns.noalias() += um * coords;
    }
    if (model.has_mean()) data.columns.colwise() += model.mean();
    return data;
}

DataMatrix sample_data(const SpikeModel& model, const ZMatrix& z) {
    return sample_data(model, population_covariance(model), z);
}

Eigen::MatrixXd random_orthonormal_columns(std::int64_t d, std::int64_t columns, std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("random_orthogonal needs d >= 1");
    if (columns < 0 || columns > d) throw std::invalid_argument("random_orthonormal_columns needs 0 <= k <= d");
    Eigen::MatrixXd gaussian(d, columns);
    PhiloxStream stream(seed, kBasisStream);
    double* out = gaussian.data();
    for (std::int64_t i = 0; i < d * columns; ++i) out[i] = stream.next_normal();

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, columns);
    const auto& r = qr.matrixQR();
    for (std::int64_t j = 0; j < columns; ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

Eigen::MatrixXd random_orthogonal(std::int64_t d, std::uint64_t seed) {
    return random_orthonormal_columns(d, d, seed);
}

DataMatrix center(const DataMatrix& data) {
    if (data.n() < 2) throw SamplingError("centering needs n >= 2");
    DataMatrix out = data;
    const Eigen::VectorXd mean = data.columns.rowwise().mean();
    out.columns.colwise() -= mean;
    out.provenance.centered = true;
    return out;
}

void write_data_matrix(const DataMatrix& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::uint64_t n = static_cast<std::uint64_t>(data.n());
    const std::uint64_t d = static_cast<std::uint64_t>(data.d());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kDumpVersion), sizeof kDumpVersion);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    // Column-major d x n storage is already one observation after another.
    out.write(reinterpret_cast<const char*>(data.columns.data()),
              static_cast<std::streamsize>(n * d * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

DataMatrix read_data_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t n = 0, d = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path.string() + ": not a SPKL dump");
    if (version != kDumpVersion) throw std::runtime_error(path.string() + ": unsupported dump version");
    DataMatrix data;
    data.columns.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(data.columns.data()), static_cast<std::streamsize>(n * d * sizeof(double)));
    if (!in) throw std::runtime_error(path.string() + ": truncated dump");
    return data;
}

}  // namespace spikelab
