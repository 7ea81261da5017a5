#pragma once

// Sample eigenstructure and principal angles.
//
// For d much larger than n the d x d sample covariance is never formed: the
// n x n Gram matrix X^T X / n shares its nonzero spectrum, and its
// eigenvectors are the normalized sample score vectors v_j. Sample
// eigenvectors are mapped back with u_j = X v_j / sqrt(n lambda_j).

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "spikelab/model.hpp"
#include "spikelab/sampling.hpp"

namespace spikelab {

class EigenError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EigenMethod { Direct, Gram };

struct EigenOptions {
    bool center = false;
    /// Upper bound on eigenvector/score columns returned; negative means all.
    std::int64_t max_vectors = -1;
};

/// Pairs with eigenvalue <= kRetainTolerance * largest are dropped from the
/// eigenvector and score columns.
inline constexpr double kRetainTolerance = 1e-12;

struct EigenResult {
    /// min(n, d) sample eigenvalues, descending, clamped at 0.
    Eigen::VectorXd eigenvalues;
    /// d x k unit sample eigenvectors; the largest-magnitude entry of each is positive.
    Eigen::MatrixXd eigenvectors;
    /// n x k unit score vectors, signed consistently with the eigenvectors.
    Eigen::MatrixXd scores;
    EigenMethod method = EigenMethod::Direct;

    std::int64_t retained() const noexcept { return eigenvectors.cols(); }
};

/// Dispatches to the Direct path when d <= n or d <= 2000, otherwise Gram.
EigenResult sample_eigen(const DataMatrix& data, const EigenOptions& options = {});
EigenResult direct_eigen(const DataMatrix& data, const EigenOptions& options = {});
EigenResult gram_eigen(const DataMatrix& data, const EigenOptions& options = {});

/// Angle in degrees between two unit vectors, ignoring sign.
double angle_between(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::VectorXd>& u);

/// Angle in degrees between a unit vector and span(basis); basis columns must be orthonormal.
double angle_to_subspace(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::MatrixXd>& basis);

/// Symmetric matrix of angle_between over all pairs of columns.
Eigen::MatrixXd pairwise_angles(const Eigen::Ref<const Eigen::MatrixXd>& vectors);

struct AngleReport {
    Eigen::VectorXd vector_angles;    // angle(u_hat_j, u_j), degrees
    Eigen::VectorXd subspace_angles;  // angle(u_hat_j, S_k), degrees
    Eigen::VectorXd inner_products;   // |<u_hat_j, u_j>|
};

/// Angles for the leading `count` sample eigenvectors (all retained when
/// negative). Spike indices are measured against their tier subspace, or
/// against span{u_1..u_m} when `merge_spike_tiers` is set (fixed-n limits);
/// noise indices against the noise subspace. Vector angles are NaN where
/// u_j is not materialized.
AngleReport angle_report(const SpikeModel& model, const CovarianceSpec& covariance, const EigenResult& result,
                         std::int64_t count = -1, bool merge_spike_tiers = false);

/// Normalized population scores S_{i,j} = lambda_j^{-1/2} u_j^T X_i (n x m).
Eigen::MatrixXd population_scores(const SpikeModel& model, const CovarianceSpec& covariance, const DataMatrix& data);

struct ScoreRatios {
    /// |sqrt(n) v_{i,j} / S_{i,j}|; NaN where flagged.
    Eigen::MatrixXd ratios;
    /// |S_{i,j}| < 1e-8.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> flagged;
};

ScoreRatios score_ratios(const EigenResult& sample, const Eigen::Ref<const Eigen::MatrixXd>& population);

/// Residuals of the exact finite-sample identities linking the sample
/// eigenstructure to the generating Z. All are relative, except
/// orthonormality which is an absolute max-entry error.
struct IdentityResiduals {
    double gram_identity = 0.0;   // ||W W^T - Z^T Z / n||_F / ||Z^T Z / n||_F
    double diagonal = 0.0;        // max_k |sum_j lhat_j P_kj^2 / l_k - mean_i z_ik^2| / mean_i z_ik^2
    double trace = 0.0;           // |sum_j lhat_j - ||X||_F^2 / n| / (||X||_F^2 / n)
    double orthonormality = 0.0;  // max |U_hat^T U_hat - I|
    double projection_bound = 0.0;  // max_j max(0, lhat_j P_jj^2 - l_j mean_i z_ij^2) / (l_j mean_i z_ij^2)

    double max() const noexcept;
};

/// Requires uncentered data generated from `z` without a mean shift and a
/// population basis that is fully available (identity, explicit, or random with d <= 2000).
IdentityResiduals finite_sample_identities(const SpikeModel& model, const CovarianceSpec& covariance,
                                           const ZMatrix& z, const DataMatrix& data, const EigenResult& result);

}  // namespace spikelab
