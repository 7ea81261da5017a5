#include "spikelab/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "spikelab/sampling.hpp"

namespace spikelab {

CriticalRatio CriticalRatio::finite(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw ModelError("c", "finite critical ratio must be positive and finite, got " + std::to_string(c));
    }
    return CriticalRatio(Kind::Finite, c);
}

CriticalRatio CriticalRatio::infinity() {
    return CriticalRatio(Kind::Infinity, std::numeric_limits<double>::infinity());
}

std::string CriticalRatio::to_string() const {
    switch (kind_) {
        case Kind::Zero: return "0";
        case Kind::Infinity: return "inf";
        case Kind::Finite: break;
    }
    std::ostringstream out;
    out.precision(17);
    out << value_;
    return out.str();
}

BasisSpec BasisSpec::explicit_orthonormal(Eigen::MatrixXd basis) {
    BasisSpec spec;
    spec.kind = BasisKind::ExplicitOrthonormal;
    spec.explicit_basis = std::move(basis);
    return spec;
}

BasisSpec BasisSpec::random_orthogonal(std::uint64_t seed) {
    BasisSpec spec;
    spec.kind = BasisKind::RandomOrthogonal;
    spec.seed = seed;
    return spec;
}

double SpikeModel::eigenvalue(std::int64_t j) const {
    if (j < 1 || j > d_) throw std::out_of_range("eigenvalue index out of range");
    std::int64_t end = 0;
    for (const Tier& tier : tiers_) {
        end += tier.multiplicity;
        if (j <= end) return tier.eigenvalue;
    }
    return noise_eigenvalue();
}

Eigen::VectorXd SpikeModel::spike_eigenvalues() const {
    Eigen::VectorXd values(m_);
    Eigen::Index pos = 0;
    for (const Tier& tier : tiers_) {
        values.segment(pos, tier.multiplicity).setConstant(tier.eigenvalue);
        pos += tier.multiplicity;
    }
    return values;
}

std::size_t SpikeModel::tier_of(std::int64_t j) const {
    if (j < 1 || j > d_) throw std::out_of_range("tier index out of range");
    std::int64_t end = 0;
    for (std::size_t k = 0; k < tiers_.size(); ++k) {
        end += tiers_[k].multiplicity;
        if (j <= end) return k + 1;
    }
    return tiers_.size() + 1;
}

ModelConfig SpikeModel::config() const {
    ModelConfig config;
    config.d = d_;
    config.n = n_;
    config.basis = basis_;
    if (has_mean_) config.mean = mean_;
    config.min_spike = min_spike_;
    for (const Tier& tier : tiers_) {
        TierConfig tc;
        tc.multiplicity = tier.multiplicity;
        tc.ratio = tier.ratio;
        if (!tier.ratio.is_finite()) tc.eigenvalue = tier.eigenvalue;
        config.tiers.push_back(tc);
    }
    return config;
}

SpikeModel build_model(const ModelConfig& config) {
    if (config.d < 1) throw ModelError("d", "dimension must be >= 1");
    if (config.n < 2) throw ModelError("n", "sample size must be >= 2");
    if (config.tiers.empty()) throw ModelError("tiers", "at least one tier is required");
    if (!(config.min_spike > 1.0)) throw ModelError("min_spike", "must exceed the noise eigenvalue 1");

    const double d = static_cast<double>(config.d);
    const double n = static_cast<double>(config.n);

    SpikeModel model;
    model.d_ = config.d;
    model.n_ = config.n;
    model.min_spike_ = config.min_spike;

    for (std::size_t k = 0; k < config.tiers.size(); ++k) {
        const TierConfig& tc = config.tiers[k];
        const std::string key = "tiers[" + std::to_string(k) + "]";
        if (tc.multiplicity < 1) throw ModelError(key + ".multiplicity", "must be >= 1");

        Tier tier{tc.multiplicity, tc.ratio, 0.0};
        switch (tc.ratio.kind()) {
            case CriticalRatio::Kind::Finite:
                if (tc.eigenvalue) throw ModelError(key + ".lambda", "only allowed when c is \"0\" or \"inf\"");
                tier.eigenvalue = d / (n * tc.ratio.value());
                break;
            case CriticalRatio::Kind::Zero:
                if (!tc.eigenvalue) throw ModelError(key + ".lambda", "required when c is \"0\"");
                tier.eigenvalue = *tc.eigenvalue;
                if (!(tier.eigenvalue > 0.0) || d / (n * tier.eigenvalue) > kZeroRatioProxy) {
                    throw ModelError(key + ".lambda", "c = 0 tier needs d/(n*lambda) <= " +
                                                          std::to_string(kZeroRatioProxy));
                }
                break;
            case CriticalRatio::Kind::Infinity:
                if (!tc.eigenvalue) throw ModelError(key + ".lambda", "required when c is \"inf\"");
                tier.eigenvalue = *tc.eigenvalue;
                if (!(tier.eigenvalue > 0.0) || d / (n * tier.eigenvalue) < kInfinityRatioProxy) {
                    throw ModelError(key + ".lambda", "c = inf tier needs d/(n*lambda) >= " +
                                                          std::to_string(kInfinityRatioProxy));
                }
                break;
        }
        if (!(tier.eigenvalue > model.noise_eigenvalue())) {
            throw ModelError(key + ".lambda", "spike eigenvalue " + std::to_string(tier.eigenvalue) +
                                                  " must exceed the noise eigenvalue 1");
        }
        // Strongly inconsistent tiers are weak spikes by construction.
        if (tc.ratio.kind() != CriticalRatio::Kind::Infinity && tier.eigenvalue < config.min_spike) {
            throw ModelError(key + ".lambda", "spike eigenvalue " + std::to_string(tier.eigenvalue) +
                                                  " is too close to the noise floor (min_spike = " +
                                                  std::to_string(config.min_spike) + ")");
        }
        if (!model.tiers_.empty() && !(tier.eigenvalue < model.tiers_.back().eigenvalue)) {
            throw ModelError(key, "tier eigenvalues must be strictly decreasing");
        }
        model.tiers_.push_back(tier);
        model.m_ += tier.multiplicity;
    }

    const std::int64_t rank_cap = std::min(config.n, config.d);
    if (model.m_ > rank_cap) {
        throw ModelError("tiers", "total multiplicity " + std::to_string(model.m_) + " exceeds min(n, d) = " +
                                      std::to_string(rank_cap));
    }
    if (2 * model.m_ > rank_cap) {
        model.warnings_.push_back("total multiplicity " + std::to_string(model.m_) +
                                  " exceeds half of min(n, d); finite-sample limits may be poor");
    }

    switch (config.basis.kind) {
        case BasisKind::Identity:
        case BasisKind::RandomOrthogonal: break;
        case BasisKind::ExplicitOrthonormal: {
            const Eigen::MatrixXd& u = config.basis.explicit_basis;
            if (u.rows() != config.d || u.cols() != config.d) {
                throw ModelError("basis", "explicit basis must be d x d");
            }
            const double err =
                (u.transpose() * u - Eigen::MatrixXd::Identity(config.d, config.d)).cwiseAbs().maxCoeff();
            if (err > 1e-10) throw ModelError("basis", "explicit basis columns are not orthonormal");
            break;
        }
    }
    model.basis_ = config.basis;

    if (config.mean) {
        if (config.mean->size() != config.d) throw ModelError("mean", "mean vector must have length d");
        if (!config.mean->allFinite()) throw ModelError("mean", "mean vector must be finite");
        model.mean_ = *config.mean;
        model.has_mean_ = !config.mean->isZero(0.0);
    } else {
        model.mean_ = Eigen::VectorXd::Zero(config.d);
    }
    return model;
}

std::vector<IndexSet> index_sets(const SpikeModel& model) {
    std::vector<IndexSet> sets;
    std::int64_t start = 1;
    for (const Tier& tier : model.tiers()) {
        sets.push_back({start, start + tier.multiplicity - 1});
        start += tier.multiplicity;
    }
    sets.push_back({start, model.d()});
    return sets;
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::Distinguishable: return "distinguishable";
        case Regime::Tiered: return "tiered";
        case Regime::BoundaryConsistent: return "boundary-consistent";
        case Regime::BoundaryStrongInconsistent: return "boundary-strong-inconsistent";
        case Regime::HDLSS: return "hdlss";
    }
    return "unknown";
}

RegimeReport classify_regime(const SpikeModel& model, bool n_fixed) {
    if (n_fixed) return {Regime::HDLSS, {"hdlss-random-limits"}};

    bool has_zero = false;
    bool has_infinity = false;
    bool has_multiple = false;
    for (const Tier& tier : model.tiers()) {
        has_zero |= tier.ratio.kind() == CriticalRatio::Kind::Zero;
        has_infinity |= tier.ratio.kind() == CriticalRatio::Kind::Infinity;
        has_multiple |= tier.multiplicity > 1;
    }
    const std::string finite_tag = has_multiple ? "tiered-subspace-limits" : "distinct-spike-limits";
    if (has_zero) {
        RegimeReport report{Regime::BoundaryConsistent, {"boundary-consistent-limits", "score-consistency", finite_tag}};
        if (has_infinity) report.applicable_theorems.push_back("boundary-strong-inconsistency-limits");
        return report;
    }
    if (has_infinity) return {Regime::BoundaryStrongInconsistent, {"boundary-strong-inconsistency-limits", finite_tag}};
    if (has_multiple) return {Regime::Tiered, {"tiered-subspace-limits"}};
    return {Regime::Distinguishable, {"distinct-spike-limits"}};
}

Eigen::MatrixXd CovarianceSpec::basis() const {
    if (full_basis_) return *full_basis_;
    if (!identity_) throw std::logic_error("full population basis is not materialized for this model");
    if (d_ > kDenseLimit) throw std::length_error("dense basis requested for d > " + std::to_string(kDenseLimit));
    return Eigen::MatrixXd::Identity(d_, d_);
}

Eigen::VectorXd CovarianceSpec::eigenvector(std::int64_t j) const {
    if (j < 1 || j > d_) throw std::out_of_range("population eigenvector index out of range");
    if (identity_) return Eigen::VectorXd::Unit(d_, j - 1);
    if (j <= spike_vectors_.cols()) return spike_vectors_.col(j - 1);
    if (full_basis_) return full_basis_->col(j - 1);
    throw std::logic_error("noise eigenvectors are not materialized for this model");
}

double CovarianceSpec::coordinate(std::int64_t j, const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (j < 1 || j > d_) throw std::out_of_range("population eigenvector index out of range");
    if (identity_) return v(j - 1);
    if (j <= spike_vectors_.cols()) return spike_vectors_.col(j - 1).dot(v);
    if (full_basis_) return full_basis_->col(j - 1).dot(v);
    return std::numeric_limits<double>::quiet_NaN();
}

Eigen::MatrixXd CovarianceSpec::dense() const {
    if (d_ > kDenseLimit) {
        throw std::length_error("dense covariance requested for d = " + std::to_string(d_) + " > " +
                                std::to_string(kDenseLimit));
    }
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d_, d_);
    if (identity_) {
        sigma.diagonal().head(spike_eigenvalues_.size()) = spike_eigenvalues_;
        return sigma;
    }
    const Eigen::VectorXd excess = spike_eigenvalues_.array() - 1.0;
    sigma += spike_vectors_ * excess.asDiagonal() * spike_vectors_.transpose();
    return sigma;
}

CovarianceSpec population_covariance(const SpikeModel& model) {
    CovarianceSpec spec;
    spec.d_ = model.d();
    spec.spike_eigenvalues_ = model.spike_eigenvalues();
    const std::int64_t m = model.m();
    switch (model.basis().kind) {
        case BasisKind::Identity:
            spec.identity_ = true;
            spec.spike_vectors_ = Eigen::MatrixXd::Identity(model.d(), m);
            break;
        case BasisKind::ExplicitOrthonormal:
            spec.full_basis_ = model.basis().explicit_basis;
            spec.spike_vectors_ = spec.full_basis_->leftCols(m);
            break;
        case BasisKind::RandomOrthogonal:
            if (model.d() <= kDenseLimit) {
                spec.full_basis_ = random_orthogonal(model.d(), model.basis().seed);
                spec.spike_vectors_ = spec.full_basis_->leftCols(m);
            } else {
                spec.spike_vectors_ = random_orthonormal_columns(model.d(), m, model.basis().seed);
            }
            break;
    }
    return spec;
}

}  // namespace spikelab
