#pragma once

// Multi-tier spiked covariance models.
//
// A model has d-dimensional Gaussian observations whose covariance has m
// spike eigenvalues grouped into tiers on top of a flat noise floor of 1.
// Each tier carries a critical ratio c = d / (n * lambda); the ratio is the
// quantity the limit theory is written in, so models are usually specified
// by c and the eigenvalue is derived from it.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spikelab {

/// Raised for invalid model configurations. `key()` names the offending
/// configuration field so front-ends can report it.
class ModelError : public std::invalid_argument {
public:
    ModelError(std::string key, const std::string& what)
        : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Critical ratio c_k, admitting the symbolic boundary values 0 and infinity.
class CriticalRatio {
public:
    enum class Kind { Finite, Zero, Infinity };

    static CriticalRatio finite(double c);
    static CriticalRatio zero() { return CriticalRatio(Kind::Zero, 0.0); }
    static CriticalRatio infinity();

    Kind kind() const noexcept { return kind_; }
    bool is_finite() const noexcept { return kind_ == Kind::Finite; }
    /// 0 for Zero, +inf for Infinity.
    double value() const noexcept { return value_; }
    std::string to_string() const;

    friend bool operator==(const CriticalRatio&, const CriticalRatio&) = default;

private:
    CriticalRatio(Kind kind, double value) : kind_(kind), value_(value) {}
    Kind kind_;
    double value_;
};

struct TierConfig {
    std::int64_t multiplicity = 1;
    CriticalRatio ratio = CriticalRatio::finite(1.0);
    /// Required for boundary tiers (c = 0 or infinity); must be absent otherwise.
    std::optional<double> eigenvalue;
};

struct Tier {
    std::int64_t multiplicity;
    CriticalRatio ratio;
    double eigenvalue;
};

enum class BasisKind { Identity, ExplicitOrthonormal, RandomOrthogonal };

struct BasisSpec {
    BasisKind kind = BasisKind::Identity;
    Eigen::MatrixXd explicit_basis;  // d x d, ExplicitOrthonormal only
    std::uint64_t seed = 0;          // RandomOrthogonal only

    static BasisSpec identity() { return {}; }
    static BasisSpec explicit_orthonormal(Eigen::MatrixXd basis);
    static BasisSpec random_orthogonal(std::uint64_t seed);
};

struct ModelConfig {
    std::int64_t d = 0;
    std::int64_t n = 0;
    std::vector<TierConfig> tiers;
    BasisSpec basis;
    std::optional<Eigen::VectorXd> mean;  // zero when absent
    double min_spike = 5.0;
};

/// Boundary proxies for the c = 0 / c = infinity regimes at finite (d, n).
inline constexpr double kZeroRatioProxy = 0.05;
inline constexpr double kInfinityRatioProxy = 20.0;
/// Largest dimension for which a dense d x d matrix is ever materialized.
inline constexpr std::int64_t kDenseLimit = 2000;

/// Contiguous 1-based index range [first, last]; empty when last < first.
struct IndexSet {
    std::int64_t first;
    std::int64_t last;

    std::int64_t size() const noexcept { return last >= first ? last - first + 1 : 0; }
    bool empty() const noexcept { return size() == 0; }
    bool contains(std::int64_t j) const noexcept { return j >= first && j <= last; }
    friend bool operator==(const IndexSet&, const IndexSet&) = default;
};

/// Validated, immutable spike model.
class SpikeModel {
public:
    std::int64_t d() const noexcept { return d_; }
    std::int64_t n() const noexcept { return n_; }
    const std::vector<Tier>& tiers() const noexcept { return tiers_; }
    std::size_t tier_count() const noexcept { return tiers_.size(); }
    /// Number of spikes (sum of tier multiplicities).
    std::int64_t m() const noexcept { return m_; }
    double noise_eigenvalue() const noexcept { return 1.0; }
    /// Population eigenvalue for 1-based index j in [1, d].
    double eigenvalue(std::int64_t j) const;
    /// Spike eigenvalues lambda_1..lambda_m.
    Eigen::VectorXd spike_eigenvalues() const;
    /// 1-based tier number containing index j; tier_count()+1 for noise indices.
    std::size_t tier_of(std::int64_t j) const;
    const BasisSpec& basis() const noexcept { return basis_; }
    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    bool has_mean() const noexcept { return has_mean_; }
    double min_spike() const noexcept { return min_spike_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Configuration that rebuilds this model. Finite tiers are stored by c
    /// only, so editing d or n and rebuilding holds every finite c fixed.
    ModelConfig config() const;

private:
    friend SpikeModel build_model(const ModelConfig& config);
    SpikeModel() = default;

    std::int64_t d_ = 0;
    std::int64_t n_ = 0;
    std::int64_t m_ = 0;
    std::vector<Tier> tiers_;
    BasisSpec basis_;
    Eigen::VectorXd mean_;
    bool has_mean_ = false;
    double min_spike_ = 5.0;
    std::vector<std::string> warnings_;
};

SpikeModel build_model(const ModelConfig& config);

/// Tier index sets H_1..H_r followed by the noise set H_{r+1} = {m+1..d}.
std::vector<IndexSet> index_sets(const SpikeModel& model);

enum class Regime { Distinguishable, Tiered, BoundaryConsistent, BoundaryStrongInconsistent, HDLSS };

std::string to_string(Regime regime);

struct RegimeReport {
    Regime regime;
    /// Tags naming the limit results that apply, e.g. "distinct-spike-limits".
    std::vector<std::string> applicable_theorems;

    friend bool operator==(const RegimeReport&, const RegimeReport&) = default;
};

RegimeReport classify_regime(const SpikeModel& model, bool n_fixed);

/// Implicit population covariance: the spike eigenvectors (d x m) plus the
/// unit noise floor. A full basis is kept when one is available densely
/// (identity is represented implicitly; explicit and random bases for d <= 2000).
class CovarianceSpec {
public:
    const Eigen::MatrixXd& spike_vectors() const noexcept { return spike_vectors_; }
    const Eigen::VectorXd& spike_eigenvalues() const noexcept { return spike_eigenvalues_; }
    std::int64_t d() const noexcept { return d_; }
    bool is_identity() const noexcept { return identity_; }
    /// True when every population eigenvector u_1..u_d is available.
    bool has_full_basis() const noexcept { return identity_ || full_basis_.has_value(); }
    /// Full d x d basis U; requires has_full_basis() and, for identity, d <= 2000.
    Eigen::MatrixXd basis() const;
    /// Population eigenvector u_j (1-based); throws when unavailable.
    Eigen::VectorXd eigenvector(std::int64_t j) const;
    /// u_j^T v for 1-based j without materializing u_j when possible.
    double coordinate(std::int64_t j, const Eigen::Ref<const Eigen::VectorXd>& v) const;
    /// Dense U Lambda U^T; d <= 2000 only.
    Eigen::MatrixXd dense() const;

private:
    friend CovarianceSpec population_covariance(const SpikeModel& model);

    std::int64_t d_ = 0;
    bool identity_ = false;
    Eigen::MatrixXd spike_vectors_;
    Eigen::VectorXd spike_eigenvalues_;
    std::optional<Eigen::MatrixXd> full_basis_;
};

CovarianceSpec population_covariance(const SpikeModel& model);

}  // namespace spikelab
