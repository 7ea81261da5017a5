#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "jacobi_oracle.hpp"
#include "spikelab/eigen.hpp"
#include "spikelab/model.hpp"
#include "spikelab/montecarlo.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/sampling.hpp"

using namespace spikelab;

namespace {

DataMatrix gaussian_data(std::int64_t d, std::int64_t n, std::uint64_t stream) {
    DataMatrix data;
    data.columns = sample_z(d, n, 2024, stream).entries;  // d x n standard normal
    return data;
}

Eigen::VectorXd unit(std::int64_t d, std::int64_t i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v(i) = 1.0;
    return v;
}

}  // namespace

TEST_CASE("diagonal sample covariance") {
    DataMatrix data;
    data.columns = (Eigen::MatrixXd(2, 2) << 2, 0, 0, std::numbers::sqrt2).finished();  // X X^T / 2 = diag(2, 1)
    const EigenResult r = sample_eigen(data);
    CHECK(r.method == EigenMethod::Direct);
    CHECK(r.eigenvalues(0) == doctest::Approx(2.0));
    CHECK(r.eigenvalues(1) == doctest::Approx(1.0));
    CHECK(angle_between(r.eigenvectors.col(0), unit(2, 0)) < 1e-6);
    CHECK(angle_between(r.eigenvectors.col(1), unit(2, 1)) < 1e-6);
}

TEST_CASE("rank one data") {
    const Eigen::VectorXd u = (Eigen::VectorXd(4) << 1, 2, -1, 0.5).finished();
    const Eigen::VectorXd s = (Eigen::VectorXd(3) << 3, -1, 2).finished();
    DataMatrix data;
    data.columns = u * s.transpose();
    for (const EigenResult& r : {direct_eigen(data), gram_eigen(data)}) {
        CHECK(r.eigenvalues(0) == doctest::Approx(s.squaredNorm() * u.squaredNorm() / 3.0));
        for (Eigen::Index j = 1; j < r.eigenvalues.size(); ++j) CHECK(std::abs(r.eigenvalues(j)) < 1e-12);
        CHECK(r.retained() == 1);
        CHECK(angle_between(r.eigenvectors.col(0), u.normalized()) < 1e-6);
    }
}

TEST_CASE("direct path matches the jacobi oracle") {
    for (std::uint64_t stream = 0; stream < 10; ++stream) {
        const DataMatrix data = gaussian_data(5, 3, stream);
        const EigenResult r = direct_eigen(data);
        const Eigen::MatrixXd sigma = data.columns * data.columns.transpose() / 3.0;
        const auto oracle = testing_oracle::jacobi_eigen(sigma);
        for (Eigen::Index j = 0; j < 5; ++j) {
            CHECK(std::abs(r.eigenvalues(j) - oracle.values(j)) <= 1e-9 * oracle.values(0));
        }
        for (Eigen::Index j = 0; j < r.retained(); ++j) {
            CHECK(std::abs(r.eigenvectors.col(j).dot(oracle.vectors.col(j))) >= 1.0 - 1e-9);
        }
    }
}

TEST_CASE("gram path matches the direct path") {
    const DataMatrix data = gaussian_data(5, 3, 99);
    const EigenResult direct = direct_eigen(data);
    const EigenResult gram = gram_eigen(data);
    CHECK(gram.method == EigenMethod::Gram);
    REQUIRE(gram.eigenvalues.size() == 3);
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::abs(gram.eigenvalues(j) - direct.eigenvalues(j)) <= 1e-10 * direct.eigenvalues(0));
        CHECK(std::abs(gram.eigenvectors.col(j).dot(direct.eigenvectors.col(j))) >= 1.0 - 1e-10);
    }
}

TEST_CASE("property: direct and gram agree on random instances") {
    PhiloxStream dims(7, 0);
    for (std::uint64_t instance = 0; instance < 30; ++instance) {
        const auto d = static_cast<std::int64_t>(2 + dims.next_u64() % 120);
        const auto n = static_cast<std::int64_t>(2 + dims.next_u64() % 60);
        const DataMatrix data = gaussian_data(d, n, 1000 + instance);
        const EigenResult a = direct_eigen(data);
        const EigenResult b = gram_eigen(data);
        const std::int64_t k = std::min(n, d);
        for (Eigen::Index j = 0; j < k; ++j) {
            CHECK(std::abs(a.eigenvalues(j) - b.eigenvalues(j)) <= 1e-9 * a.eigenvalues(0));
        }
        // Sign convention makes matched eigenvectors agree exactly, not just up to sign.
        for (Eigen::Index j = 0; j < std::min(a.retained(), b.retained()); ++j) {
            const double gap = std::min(j > 0 ? a.eigenvalues(j - 1) - a.eigenvalues(j) : INFINITY,
                                        j + 1 < k ? a.eigenvalues(j) - a.eigenvalues(j + 1) : INFINITY);
            if (gap > 1e-6 * a.eigenvalues(0)) CHECK(a.eigenvectors.col(j).dot(b.eigenvectors.col(j)) >= 1.0 - 1e-8);
        }
    }
}

TEST_CASE("orthogonal equal-norm columns give a flat spectrum") {
    DataMatrix data;
    data.columns = 3.0 * random_orthogonal(6, 4).leftCols(4);
    const EigenResult r = gram_eigen(data);
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(r.eigenvalues(j) == doctest::Approx(9.0 / 4.0));
}

TEST_CASE("results are sorted, unit norm, and sign normalized") {
    const DataMatrix data = gaussian_data(40, 15, 5);
    for (const EigenResult& r : {direct_eigen(data), gram_eigen(data)}) {
        for (Eigen::Index j = 1; j < r.eigenvalues.size(); ++j) CHECK(r.eigenvalues(j) <= r.eigenvalues(j - 1));
        const Eigen::MatrixXd g = r.eigenvectors.transpose() * r.eigenvectors;
        CHECK((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= 1e-8);
        const Eigen::MatrixXd h = r.scores.transpose() * r.scores;
        CHECK((h - Eigen::MatrixXd::Identity(h.rows(), h.cols())).cwiseAbs().maxCoeff() <= 1e-8);
        for (Eigen::Index j = 0; j < r.retained(); ++j) {
            Eigen::Index at = 0;
            r.eigenvectors.col(j).cwiseAbs().maxCoeff(&at);
            CHECK(r.eigenvectors(at, j) > 0.0);
        }
    }
}

TEST_CASE("dispatch") {
    CHECK(sample_eigen(gaussian_data(30, 40, 0)).method == EigenMethod::Direct);
    CHECK(sample_eigen(gaussian_data(1500, 40, 0)).method == EigenMethod::Direct);
    CHECK(sample_eigen(gaussian_data(2500, 40, 0)).method == EigenMethod::Gram);
}

TEST_CASE("gram path at desk scale") {
    const DataMatrix data = gaussian_data(10000, 200, 3);
    const auto start = std::chrono::steady_clock::now();
    const EigenResult r = sample_eigen(data);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(r.method == EigenMethod::Gram);
    CHECK(seconds < 10.0);
}

TEST_CASE("angles") {
    const double s = std::numbers::sqrt2 / 2;
    CHECK(angle_between(unit(3, 0), unit(3, 0)) == 0.0);
    CHECK(angle_between(unit(3, 0), unit(3, 1)) == doctest::Approx(90.0));
    CHECK(angle_between(Eigen::Vector3d(s, s, 0), unit(3, 0)) == doctest::Approx(45.0));
    CHECK(angle_between(-unit(3, 0), unit(3, 0)) == 0.0);
    CHECK_THROWS(angle_between(Eigen::Vector3d(1, 1, 0), unit(3, 0)));

    const Eigen::MatrixXd span12 = Eigen::MatrixXd::Identity(4, 2);
    CHECK(angle_to_subspace(unit(4, 0), span12) == 0.0);
    CHECK(angle_to_subspace(unit(4, 2), span12) == doctest::Approx(90.0));
    CHECK(angle_to_subspace(Eigen::Vector4d(0.5, 0.5, 0.5, 0.5), span12) == doctest::Approx(45.0));
    CHECK_THROWS(angle_to_subspace(unit(4, 0), 2.0 * span12));
}

TEST_CASE("pairwise angles") {
    Eigen::MatrixXd two(2, 2);
    two << 1, 0, 0, 1;
    CHECK(pairwise_angles(two)(0, 1) == doctest::Approx(90.0));
    Eigen::MatrixXd same(3, 2);
    same.col(0) = Eigen::Vector3d(1, 2, 2) / 3.0;
    same.col(1) = same.col(0);
    CHECK(pairwise_angles(same)(0, 1) == 0.0);
    CHECK(pairwise_angles(same)(0, 0) == 0.0);

    // Uniform directions in d = 1e4 are nearly orthogonal.
    Eigen::MatrixXd sphere = sample_z(10000, 100, 8, 0).entries;
    sphere.colwise().normalize();
    const Eigen::MatrixXd angles = pairwise_angles(sphere);
    double worst = 0.0;
    for (Eigen::Index a = 0; a < 100; ++a) {
        for (Eigen::Index b = a + 1; b < 100; ++b) worst = std::max(worst, std::abs(angles(a, b) - 90.0));
    }
    CHECK(worst <= 3.0);
}

TEST_CASE("angle report against the model") {
    ModelConfig c;
    c.d = 300;
    c.n = 40;
    c.tiers = {{1, CriticalRatio::finite(0.1), std::nullopt}, {2, CriticalRatio::finite(0.3), std::nullopt}};
    const SpikeModel model = build_model(c);
    const CovarianceSpec cov = population_covariance(model);
    const EigenResult r = sample_eigen(sample_data(model, cov, sample_z(40, 300, 1, 0)));
    const AngleReport report = angle_report(model, cov, r, 6);
    // Coordinate-sum form of the subspace angle on the identity basis.
    for (Eigen::Index j = 1; j < 3; ++j) {
        const double cos2 = r.eigenvectors(1, j) * r.eigenvectors(1, j) + r.eigenvectors(2, j) * r.eigenvectors(2, j);
        CHECK(report.subspace_angles(j) == doctest::Approx(std::acos(std::sqrt(cos2)) * 180.0 / std::numbers::pi));
        CHECK(report.subspace_angles(j) <= report.vector_angles(j) + 1e-12);
    }
    CHECK(report.vector_angles(0) == doctest::Approx(report.subspace_angles(0)));
    // Noise indices: angle to the noise subspace from the spike coordinates.
    const double spike_mass = r.eigenvectors.col(4).head(3).squaredNorm();
    CHECK(report.subspace_angles(4) == doctest::Approx(std::acos(std::sqrt(1.0 - spike_mass)) * 180.0 / std::numbers::pi));

    // Merged spike subspace for the fixed-n view.
    const AngleReport merged = angle_report(model, cov, r, 3, true);
    const double cos2 = r.eigenvectors.col(1).head(3).squaredNorm();
    CHECK(merged.subspace_angles(1) == doctest::Approx(std::acos(std::sqrt(cos2)) * 180.0 / std::numbers::pi));
}

TEST_CASE("population scores") {
    ModelConfig c;
    c.d = 6;
    c.n = 5;
    c.min_spike = 2.0;
    c.tiers = {{1, CriticalRatio::finite(6.0 / (5.0 * 4.0)), std::nullopt}, {1, CriticalRatio::finite(6.0 / (5.0 * 3.0)), std::nullopt}};
    const SpikeModel model = build_model(c);
    const CovarianceSpec cov = population_covariance(model);
    const ZMatrix z = sample_z(5, 6, 3, 0);
    const Eigen::MatrixXd s = population_scores(model, cov, sample_data(model, cov, z));
    CHECK((s - z.entries.leftCols(2)).cwiseAbs().maxCoeff() < 1e-12);

    ModelConfig one;
    one.d = 3;
    one.n = 2;
    one.min_spike = 2.0;
    one.tiers = {{1, CriticalRatio::finite(3.0 / 8.0), std::nullopt}};  // lambda = 4
    const SpikeModel m1 = build_model(one);
    DataMatrix x;
    x.columns = (Eigen::MatrixXd(3, 2) << 2, 2, 0, 0, 0, 0).finished();
    const Eigen::MatrixXd s1 = population_scores(m1, population_covariance(m1), x);
    CHECK(s1(0, 0) == doctest::Approx(1.0));
    CHECK(s1(1, 0) == doctest::Approx(1.0));

    ModelConfig big;
    big.d = 20;
    big.n = 10000;
    big.tiers = {{1, CriticalRatio::finite(20.0 / (10000.0 * 9.0)), std::nullopt}};
    const SpikeModel mb = build_model(big);
    const CovarianceSpec cb = population_covariance(mb);
    const Eigen::VectorXd sb = population_scores(mb, cb, sample_data(mb, cb, sample_z(10000, 20, 11, 0))).col(0);
    const double var = (sb.array() - sb.mean()).square().sum() / 9999.0;
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("score ratios") {
    const DataMatrix data = gaussian_data(30, 12, 4);
    const EigenResult r = sample_eigen(data);
    const Eigen::MatrixXd exact = std::sqrt(12.0) * r.scores.leftCols(2);
    const ScoreRatios ratios = score_ratios(r, exact);
    CHECK((ratios.ratios.array() - 1.0).abs().maxCoeff() < 1e-12);

    const ScoreRatios flipped = score_ratios(r, -exact);
    CHECK((flipped.ratios - ratios.ratios).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::MatrixXd with_zero = exact;
    with_zero(3, 0) = 0.0;
    const ScoreRatios flagged = score_ratios(r, with_zero);
    CHECK(flagged.flagged(3, 0));
    CHECK(std::isnan(flagged.ratios(3, 0)));
    CHECK_THROWS(score_ratios(r, Eigen::MatrixXd::Zero(12, 2)));
}

TEST_CASE("score consistency for a dominant spike") {
    ModelConfig c;
    c.d = 200;
    c.n = 200;
    c.tiers = {{1, CriticalRatio::zero(), 1e6}};
    const SpikeModel model = build_model(c);
    const CovarianceSpec cov = population_covariance(model);
    std::vector<double> pooled;
    for (std::uint64_t stream = 0; stream < 10; ++stream) {
        const DataMatrix data = sample_data(model, cov, sample_z(200, 200, 42, stream));
        const ScoreRatios ratios = score_ratios(sample_eigen(data), population_scores(model, cov, data));
        for (Eigen::Index i = 0; i < 200; ++i) pooled.push_back(ratios.ratios(i, 0));
    }
    std::nth_element(pooled.begin(), pooled.begin() + pooled.size() / 2, pooled.end());
    CHECK(std::abs(pooled[pooled.size() / 2] - 1.0) < 0.02);
}

TEST_CASE("exact finite-sample identities") {
    SUBCASE("direct path") {
        ModelConfig c;
        c.d = 100;
        c.n = 50;
        c.tiers = {{1, CriticalRatio::finite(0.1), std::nullopt}, {2, CriticalRatio::finite(0.4), std::nullopt}};
        const IdentityResiduals r = identity_check(build_model(c), 42);
        CHECK(r.max() <= 1e-8);
    }
    SUBCASE("gram path") {
        ModelConfig c;
        c.d = 10000;
        c.n = 200;
        c.tiers = {{1, CriticalRatio::finite(0.2), std::nullopt}, {1, CriticalRatio::finite(0.4), std::nullopt},
                   {1, CriticalRatio::finite(1.0), std::nullopt}};
        const IdentityResiduals r = identity_check(build_model(c), 42);
        CHECK(r.max() <= 1e-7);
    }
    SUBCASE("explicit rotated basis") {
        ModelConfig c;
        c.d = 60;
        c.n = 25;
        c.tiers = {{2, CriticalRatio::finite(0.2), std::nullopt}};
        c.basis = BasisSpec::explicit_orthonormal(random_orthogonal(60, 17));
        const IdentityResiduals r = identity_check(build_model(c), 5);
        CHECK(r.max() <= 1e-8);
    }
    SUBCASE("duplicated observations") {
        ModelConfig c;
        c.d = 40;
        c.n = 10;
        c.tiers = {{1, CriticalRatio::finite(0.5), std::nullopt}};
        const SpikeModel model = build_model(c);
        ZMatrix z = sample_z(10, 40, 3, 0);
        z.entries.row(7) = z.entries.row(2);
        z.entries.row(9) = z.entries.row(2);
        const IdentityResiduals r = identity_check(model, z);
        CHECK(r.max() <= 1e-8);
    }
}

TEST_CASE("non-finite data is rejected") {
    DataMatrix data = gaussian_data(5, 4, 0);
    data.columns(2, 1) = std::nan("");
    CHECK_THROWS_AS(sample_eigen(data), EigenError);
}
