#include "spikelab/limits.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "spikelab/parallel.hpp"
#include "spikelab/rng.hpp"

namespace spikelab {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

double angle_from_inverse_cos2(double one_plus) { return std::acos(1.0 / std::sqrt(one_plus)) * kRadToDeg; }

}  // namespace

double cone_angle_deg(const CriticalRatio& c) {
    switch (c.kind()) {
        case CriticalRatio::Kind::Zero: return 0.0;
        case CriticalRatio::Kind::Infinity: return 90.0;
        case CriticalRatio::Kind::Finite: break;
    }
    return angle_from_inverse_cos2(1.0 + c.value());
}

NoiseLimits predict_noise(const SpikeModel& model, bool n_fixed) {
    NoiseLimits noise;
    const double d = static_cast<double>(model.d());
    const double n = static_cast<double>(model.n());
    noise.eigenvalue_scale = 1.0;
    noise.vector_rate = n_fixed ? 1.0 / std::sqrt(d) : std::sqrt(n / d);
    noise.subspace_angle_deg = 0.0;
    return noise;
}

LimitPrediction predict(const SpikeModel& model, const RegimeReport& regime) {
    if (regime.regime == Regime::HDLSS) {
        throw LimitError("predict covers growing-n regimes; use hdlss_limit_sample for fixed n");
    }
    LimitPrediction prediction;
    prediction.tier_map = index_sets(model);
    for (std::size_t k = 0; k < model.tiers().size(); ++k) {
        const Tier& tier = model.tiers()[k];
        double ratio = 1.0;
        switch (tier.ratio.kind()) {
            case CriticalRatio::Kind::Finite: ratio = 1.0 + tier.ratio.value(); break;
            case CriticalRatio::Kind::Zero: ratio = 1.0; break;
            case CriticalRatio::Kind::Infinity: ratio = std::numeric_limits<double>::infinity(); break;
        }
        const IndexSet& set = prediction.tier_map[k];
        for (std::int64_t j = set.first; j <= set.last; ++j) {
            prediction.spikes.push_back({j, k + 1, tier.ratio, ratio, cone_angle_deg(tier.ratio)});
        }
    }
    prediction.noise = predict_noise(model, false);
    return prediction;
}

HdlssLimitSample hdlss_limit_sample(const SpikeModel& model, std::int64_t draws, std::uint64_t seed,
                                    unsigned threads) {
    if (draws < 1) throw LimitError("hdlss_limit_sample needs draws >= 1");
    const std::int64_t m = model.m();
    const std::int64_t n = model.n();
    if (m < 1) throw LimitError("hdlss_limit_sample needs at least one spike");

    HdlssLimitSample sample;
    sample.n = n;
    sample.c.resize(m);
    Eigen::Index pos = 0;
    for (const Tier& tier : model.tiers()) {
        if (!tier.ratio.is_finite()) {
            throw LimitError("random limits with c = 0 or c = inf are not supported (tier c = " +
                             tier.ratio.to_string() + ")");
        }
        sample.c.segment(pos, tier.multiplicity).setConstant(tier.ratio.value());
        pos += tier.multiplicity;
    }
    sample.w_eigenvalues.resize(draws, m);
    sample.eigenvalue_ratio_draws.resize(draws, m);
    sample.angle_draws_deg.resize(draws, m);

    const Eigen::VectorXd scale = sample.c.array().rsqrt();
    const double nd = static_cast<double>(n);

    parallel_for(draws, resolve_threads(threads), [&](std::int64_t draw) {
        PhiloxStream stream(seed, static_cast<std::uint64_t>(draw));
        Eigen::MatrixXd block(n, m);
        double* out = block.data();
        for (std::int64_t i = 0; i < n * m; ++i) out[i] = stream.next_normal();

        Eigen::VectorXd eig(m);
        if (m == 1) {
            eig(0) = block.squaredNorm() / sample.c(0);
        } else {
            const Eigen::MatrixXd scaled = block * scale.asDiagonal();
            const Eigen::MatrixXd w = scaled.transpose() * scaled;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w, Eigen::EigenvaluesOnly);
            eig = solver.eigenvalues().reverse().cwiseMax(0.0);
        }
        for (std::int64_t j = 0; j < m; ++j) {
            sample.w_eigenvalues(draw, j) = eig(j);
            sample.eigenvalue_ratio_draws(draw, j) = sample.c(j) * eig(j) / nd + sample.c(j);
            sample.angle_draws_deg(draw, j) = angle_from_inverse_cos2(1.0 + nd / eig(j));
        }
    });
    return sample;
}

nlohmann::json to_json(const LimitPrediction& prediction) {
    nlohmann::json out = nlohmann::json::array();
    for (const IndexLimit& limit : prediction.spikes) {
        nlohmann::json row;
        row["index"] = limit.index;
        row["tier"] = limit.tier;
        if (limit.c.kind() == CriticalRatio::Kind::Infinity) {
            row["c"] = "inf";
        } else {
            row["c"] = limit.c.value();
        }
        if (std::isinf(limit.ratio_limit)) {
            row["ratio_limit"] = "inf";
        } else {
            row["ratio_limit"] = limit.ratio_limit;
        }
        row["angle_limit_deg"] = limit.angle_limit_deg;
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace spikelab
