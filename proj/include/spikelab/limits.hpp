#pragma once

// Theoretical limits of sample eigenvalues and eigenvector angles.
//
// Growing-n regimes have deterministic limits driven by each tier's
// critical ratio c: lambda_hat/lambda -> 1 + c and the angle to the tier
// subspace -> arccos((1 + c)^{-1/2}). With n fixed the limits are random and
// are sampled through the eigenvalues of the m x m matrix W = C Z_m^T Z_m C,
// C = diag(c_j^{-1/2}).

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spikelab/model.hpp"

namespace spikelab {

class LimitError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct IndexLimit {
    std::int64_t index;  // 1-based
    std::size_t tier;    // 1-based
    CriticalRatio c;
    double ratio_limit;      // +inf for c = inf
    double angle_limit_deg;  // against the tier subspace (equals the vector angle for singleton tiers)
};

struct NoiseLimits {
    double eigenvalue_scale = 1.0;  // n lambda_hat / (d lambda) for noise indices
    double vector_rate = 0.0;       // order of |<u_hat_j, u_j>| for noise indices
    double subspace_angle_deg = 0.0;
};

struct LimitPrediction {
    std::vector<IndexLimit> spikes;
    NoiseLimits noise;
    std::vector<IndexSet> tier_map;
};

/// Growing-n limits; throws LimitError for the HDLSS regime.
LimitPrediction predict(const SpikeModel& model, const RegimeReport& regime);

/// Noise-index limits; the vector rate is (n/d)^{1/2} when n grows and d^{-1/2} with n fixed.
NoiseLimits predict_noise(const SpikeModel& model, bool n_fixed = false);

/// arccos((1 + c)^{-1/2}) in degrees; 0 for c = 0 and 90 for c = inf.
double cone_angle_deg(const CriticalRatio& c);

struct HdlssLimitSample {
    std::int64_t n = 0;
    Eigen::VectorXd c;                     // c_1..c_m
    Eigen::MatrixXd w_eigenvalues;         // draws x m, descending within a row
    Eigen::MatrixXd eigenvalue_ratio_draws;  // c_j lambda_j(W) / n + c_j
    Eigen::MatrixXd angle_draws_deg;         // arccos((1 + n / lambda_j(W))^{-1/2})

    std::int64_t draws() const noexcept { return w_eigenvalues.rows(); }
};

/// Draws the HDLSS random limits. Draw i uses Philox stream i under `seed`,
/// filling an n x m standard normal block column by column.
HdlssLimitSample hdlss_limit_sample(const SpikeModel& model, std::int64_t draws, std::uint64_t seed,
                                    unsigned threads = 1);

/// One JSON object per spike index: {"index", "tier", "c", "ratio_limit", "angle_limit_deg"}.
nlohmann::json to_json(const LimitPrediction& prediction);

}  // namespace spikelab
