#include "spikelab/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace spikelab {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solve_symmetric(const Eigen::MatrixXd& lower) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lower, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        const Eigen::MatrixXd full = lower.selfadjointView<Eigen::Lower>();
        std::ostringstream msg;
        msg << "symmetric eigensolver did not converge on a " << lower.rows() << "x" << lower.cols()
            << " matrix (Frobenius norm " << full.norm() << ", max |entry| " << full.cwiseAbs().maxCoeff()
            << ", finite " << (full.allFinite() ? "yes" : "no") << ")";
        throw EigenError(msg.str());
    }
    return solver;
}

// Indices into the solver's ascending spectrum, largest first; exact ties
// keep the solver's index order.
std::vector<Eigen::Index> descending_order(const Eigen::VectorXd& ascending) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(ascending.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return ascending(a) > ascending(b); });
    return order;
}

std::int64_t retained_count(const Eigen::VectorXd& eigenvalues, std::int64_t max_vectors) {
    std::int64_t k = 0;
    if (eigenvalues.size() > 0 && eigenvalues(0) > 0.0) {
        const double floor = eigenvalues(0) * kRetainTolerance;
        while (k < eigenvalues.size() && eigenvalues(k) > floor) ++k;
    }
    if (max_vectors >= 0) k = std::min(k, max_vectors);
    return k;
}

void fix_signs(EigenResult& result) {
    for (Eigen::Index j = 0; j < result.eigenvectors.cols(); ++j) {
        Eigen::Index pos = 0;
        result.eigenvectors.col(j).cwiseAbs().maxCoeff(&pos);
        if (result.eigenvectors(pos, j) < 0.0) {
            result.eigenvectors.col(j) *= -1.0;
            result.scores.col(j) *= -1.0;
        }
    }
}

const Eigen::MatrixXd& prepared(const DataMatrix& data, const EigenOptions& options, DataMatrix& storage) {
    if (data.n() < 1 || data.d() < 1) throw EigenError("empty data matrix");
    if (!data.columns.allFinite()) throw EigenError("data matrix contains non-finite entries");
    if (!options.center) return data.columns;
    storage = center(data);
    return storage.columns;
}

}  // namespace

EigenResult direct_eigen(const DataMatrix& data, const EigenOptions& options) {
    DataMatrix storage;
    const Eigen::MatrixXd& x = prepared(data, options, storage);
    const Eigen::Index d = x.rows();
    const Eigen::Index n = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x, inv_n);
    const auto solver = solve_symmetric(cov);
    const auto order = descending_order(solver.eigenvalues());

    const Eigen::Index r = std::min(n, d);
    EigenResult result;
    result.method = EigenMethod::Direct;
    result.eigenvalues.resize(r);
    for (Eigen::Index j = 0; j < r; ++j) result.eigenvalues(j) = std::max(0.0, solver.eigenvalues()(order[j]));

    const std::int64_t k = retained_count(result.eigenvalues, options.max_vectors);
    result.eigenvectors.resize(d, k);
    for (Eigen::Index j = 0; j < k; ++j) result.eigenvectors.col(j) = solver.eigenvectors().col(order[j]);
    result.scores.noalias() = x.transpose() * result.eigenvectors;
    for (Eigen::Index j = 0; j < k; ++j) {
        result.scores.col(j) /= std::sqrt(static_cast<double>(n) * result.eigenvalues(j));
    }
    fix_signs(result);
    return result;
}

EigenResult gram_eigen(const DataMatrix& data, const EigenOptions& options) {
    DataMatrix storage;
    const Eigen::MatrixXd& x = prepared(data, options, storage);
    const Eigen::Index d = x.rows();
    const Eigen::Index n = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), inv_n);
    const auto solver = solve_symmetric(gram);
    const auto order = descending_order(solver.eigenvalues());

    const Eigen::Index r = std::min(n, d);
    EigenResult result;
    result.method = EigenMethod::Gram;
    result.eigenvalues.resize(r);
    for (Eigen::Index j = 0; j < r; ++j) result.eigenvalues(j) = std::max(0.0, solver.eigenvalues()(order[j]));

    const std::int64_t k = retained_count(result.eigenvalues, options.max_vectors);
    result.scores.resize(n, k);
    for (Eigen::Index j = 0; j < k; ++j) result.scores.col(j) = solver.eigenvectors().col(order[j]);
    result.eigenvectors.noalias() = x * result.scores;
    for (Eigen::Index j = 0; j < k; ++j) {
        result.eigenvectors.col(j) /= std::sqrt(static_cast<double>(n) * result.eigenvalues(j));
    }
    fix_signs(result);
    return result;
}

EigenResult sample_eigen(const DataMatrix& data, const EigenOptions& options) {
    if (data.d() <= data.n() || data.d() <= kDenseLimit) return direct_eigen(data, options);
    return gram_eigen(data, options);
}

namespace {

void require_unit(const Eigen::Ref<const Eigen::VectorXd>& v, const char* name) {
    const double norm = v.norm();
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
        std::ostringstream msg;
        msg << name << " is not a unit vector (norm " << norm << ")";
        throw std::invalid_argument(msg.str());
    }
}

double degrees_from_cosine(double cosine) { return std::acos(std::min(1.0, std::abs(cosine))) * kRadToDeg; }

}  // namespace

double angle_between(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (v.size() != u.size()) throw std::invalid_argument("angle_between: dimension mismatch");
    require_unit(v, "v");
    require_unit(u, "u");
    return degrees_from_cosine(v.dot(u));
}

double angle_to_subspace(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::MatrixXd>& basis) {
    if (v.size() != basis.rows()) throw std::invalid_argument("angle_to_subspace: dimension mismatch");
    require_unit(v, "v");
    const Eigen::MatrixXd gram = basis.transpose() * basis;
    const double err = (gram - Eigen::MatrixXd::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-8) throw std::invalid_argument("angle_to_subspace: basis columns are not orthonormal");
    return degrees_from_cosine((basis.transpose() * v).norm());
}

Eigen::MatrixXd pairwise_angles(const Eigen::Ref<const Eigen::MatrixXd>& vectors) {
    const Eigen::Index count = vectors.cols();
    for (Eigen::Index a = 0; a < count; ++a) require_unit(vectors.col(a), "vector");
    const Eigen::MatrixXd inner = vectors.transpose() * vectors;
    Eigen::MatrixXd angles = Eigen::MatrixXd::Zero(count, count);
    for (Eigen::Index a = 0; a < count; ++a) {
        for (Eigen::Index b = a + 1; b < count; ++b) {
            angles(a, b) = angles(b, a) = degrees_from_cosine(inner(a, b));
        }
    }
    return angles;
}

AngleReport angle_report(const SpikeModel& model, const CovarianceSpec& covariance, const EigenResult& result,
                         std::int64_t count, bool merge_spike_tiers) {
    if (count < 0 || count > result.retained()) count = result.retained();
    const auto sets = index_sets(model);
    const std::int64_t m = model.m();

    AngleReport report;
    report.vector_angles.resize(count);
    report.subspace_angles.resize(count);
    report.inner_products.resize(count);
    for (std::int64_t j = 1; j <= count; ++j) {
        const auto u_hat = result.eigenvectors.col(j - 1);
        const double norm2 = u_hat.squaredNorm();

        const double inner = std::abs(covariance.coordinate(j, u_hat));
        report.inner_products(j - 1) = inner;
        report.vector_angles(j - 1) = std::isnan(inner) ? inner : degrees_from_cosine(inner);

        const std::size_t tier = model.tier_of(j);
        double spike_mass = 0.0;
        double tier_mass = 0.0;
        for (std::int64_t l = 1; l <= m; ++l) {
            const double c = covariance.coordinate(l, u_hat);
            spike_mass += c * c;
            if (sets[tier - 1].contains(l)) tier_mass += c * c;
        }
        if (tier == sets.size()) {
            tier_mass = std::max(0.0, norm2 - spike_mass);
        } else if (merge_spike_tiers) {
            tier_mass = spike_mass;
        }
        report.subspace_angles(j - 1) = degrees_from_cosine(std::sqrt(tier_mass / norm2));
    }
    return report;
}

Eigen::MatrixXd population_scores(const SpikeModel& model, const CovarianceSpec& covariance, const DataMatrix& data) {
    if (data.d() != model.d()) throw std::invalid_argument("population_scores: dimension mismatch");
    const Eigen::VectorXd lambda = covariance.spike_eigenvalues();
    Eigen::MatrixXd scores;
    if (covariance.is_identity()) {
        scores = data.columns.topRows(model.m()).transpose();
    } else {
        scores.noalias() = data.columns.transpose() * covariance.spike_vectors();
    }
    for (Eigen::Index j = 0; j < scores.cols(); ++j) scores.col(j) /= std::sqrt(lambda(j));
    return scores;
}

ScoreRatios score_ratios(const EigenResult& sample, const Eigen::Ref<const Eigen::MatrixXd>& population) {
    const Eigen::Index n = population.rows();
    const Eigen::Index m = population.cols();
    if (sample.scores.rows() != n) throw std::invalid_argument("score_ratios: sample size mismatch");
    if (m > sample.retained()) throw std::invalid_argument("score_ratios: more population scores than sample pairs");

    ScoreRatios out;
    out.ratios.resize(n, m);
    out.flagged.resize(n, m);
    const double root_n = std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::VectorXd v = root_n * sample.scores.col(j);
        if (v.dot(population.col(j)) < 0.0) v = -v;
        Eigen::Index usable = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = population(i, j);
            out.flagged(i, j) = std::abs(s) < 1e-8;
            if (out.flagged(i, j)) {
                out.ratios(i, j) = std::numeric_limits<double>::quiet_NaN();
            } else {
                out.ratios(i, j) = std::abs(v(i) / s);
                ++usable;
            }
        }
        if (usable == 0) {
            throw std::invalid_argument("score_ratios: population scores of component " + std::to_string(j + 1) +
                                        " are all degenerate");
        }
    }
    return out;
}

double IdentityResiduals::max() const noexcept {
    return std::max({gram_identity, diagonal, trace, orthonormality, projection_bound});
}

IdentityResiduals finite_sample_identities(const SpikeModel& model, const CovarianceSpec& covariance,
                                           const ZMatrix& z, const DataMatrix& data, const EigenResult& result) {
    if (!covariance.has_full_basis()) {
        throw std::invalid_argument("finite-sample identities need the full population basis");
    }
    if (data.provenance.centered || model.has_mean()) {
        throw std::invalid_argument("finite-sample identities need uncentered data without a mean shift");
    }
    const Eigen::Index d = model.d();
    const Eigen::Index n = model.n();
    if (z.n() != n || z.d() != d || data.d() != d || data.n() != n) {
        throw std::invalid_argument("finite-sample identities: dimension mismatch");
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::Index k = result.retained();

    // Sample eigenvectors in population coordinates.
    Eigen::MatrixXd coords;
    if (covariance.is_identity()) {
        coords = result.eigenvectors;
    } else {
        coords.noalias() = covariance.basis().transpose() * result.eigenvectors;
    }
    Eigen::VectorXd inv_sqrt_lambda = Eigen::VectorXd::Ones(d);
    inv_sqrt_lambda.head(model.m()) = covariance.spike_eigenvalues().array().rsqrt();

    // W = Lambda^{-1/2} P Lambda_hat^{1/2}, d x k.
    Eigen::MatrixXd w = inv_sqrt_lambda.asDiagonal() * coords;
    for (Eigen::Index j = 0; j < k; ++j) w.col(j) *= std::sqrt(result.eigenvalues(j));

    const Eigen::MatrixXd g = z.entries * std::sqrt(inv_n);  // n x d, G^T G = Z^T Z / n
    const Eigen::VectorXd z_mean_sq = z.entries.colwise().squaredNorm().transpose() * inv_n;

    IdentityResiduals res;

    // ||W W^T - G^T G||_F over lower-triangular row blocks.
    {
        Eigen::MatrixXd ggt = Eigen::MatrixXd::Zero(n, n);
        ggt.selfadjointView<Eigen::Lower>().rankUpdate(g, 1.0);
        const double denom = Eigen::MatrixXd(ggt.selfadjointView<Eigen::Lower>()).norm();
        constexpr Eigen::Index block = 256;
        double sum_sq = 0.0;
        for (Eigen::Index r0 = 0; r0 < d; r0 += block) {
            const Eigen::Index rows = std::min(block, d - r0);
            const Eigen::Index cols = r0 + rows;
            Eigen::MatrixXd diff = w.middleRows(r0, rows) * w.topRows(cols).transpose();
            diff.noalias() -= g.middleCols(r0, rows).transpose() * g.leftCols(cols);
            // Strictly-lower part counts twice, the diagonal block's upper part is skipped.
            const double off = diff.leftCols(r0).squaredNorm();
            double diag_block = 0.0;
            for (Eigen::Index c = 0; c < rows; ++c) {
                for (Eigen::Index r = c; r < rows; ++r) {
                    const double v = diff(r, r0 + c);
                    diag_block += (r == c ? 1.0 : 2.0) * v * v;
                }
            }
            sum_sq += 2.0 * off + diag_block;
        }
        res.gram_identity = denom > 0.0 ? std::sqrt(sum_sq) / denom : std::sqrt(sum_sq);
    }

    for (Eigen::Index row = 0; row < d; ++row) {
        const double lhs = w.row(row).squaredNorm();
        const double rhs = z_mean_sq(row);
        const double scale = rhs > 0.0 ? rhs : 1.0;
        res.diagonal = std::max(res.diagonal, std::abs(lhs - rhs) / scale);
    }

    const double energy = data.columns.squaredNorm() * inv_n;
    const double total = result.eigenvalues.sum();
    res.trace = energy > 0.0 ? std::abs(total - energy) / energy : std::abs(total);

    if (k > 0) {
        const Eigen::MatrixXd gram = result.eigenvectors.transpose() * result.eigenvectors;
        res.orthonormality = (gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    }

    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(k, d); ++j) {
        const double lambda_j = model.eigenvalue(j + 1);
        const double lhs = result.eigenvalues(j) * coords(j, j) * coords(j, j);
        const double rhs = lambda_j * z_mean_sq(j);
        const double scale = rhs > 0.0 ? rhs : 1.0;
        res.projection_bound = std::max(res.projection_bound, std::max(0.0, lhs - rhs) / scale);
    }
    return res;
}

}  // namespace spikelab
