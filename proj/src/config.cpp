#include "spikelab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace spikelab {

namespace {

using nlohmann::json;

std::int64_t require_int(const json& obj, const std::string& field, const std::string& key) {
    if (!obj.contains(field)) throw ModelError(key, "missing required field");
    const json& v = obj.at(field);
    if (!v.is_number_integer()) throw ModelError(key, "must be an integer");
    return v.get<std::int64_t>();
}

CriticalRatio parse_ratio(const json& v, const std::string& key) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "0") return CriticalRatio::zero();
        if (s == "inf") return CriticalRatio::infinity();
        throw ModelError(key, "must be a positive number, \"0\" or \"inf\", got \"" + s + "\"");
    }
    if (!v.is_number()) throw ModelError(key, "must be a positive number, \"0\" or \"inf\"");
    const double c = v.get<double>();
    if (c == 0.0) return CriticalRatio::zero();
    if (!(c > 0.0) || !std::isfinite(c)) throw ModelError(key, "must be positive and finite");
    return CriticalRatio::finite(c);
}

}  // namespace

ModelConfig model_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ModelError("", "model config must be a JSON object");
    static const char* const known[] = {"d", "n", "tiers", "basis", "basis_seed", "mean", "min_spike"};
    for (const auto& [field, value] : doc.items()) {
        if (std::find(std::begin(known), std::end(known), field) == std::end(known)) {
            throw ModelError(field, "unknown configuration key");
        }
    }

    ModelConfig config;
    config.d = require_int(doc, "d", "d");
    config.n = require_int(doc, "n", "n");

    if (!doc.contains("tiers")) throw ModelError("tiers", "missing required field");
    const json& tiers = doc.at("tiers");
    if (!tiers.is_array() || tiers.empty()) throw ModelError("tiers", "must be a non-empty array");
    for (std::size_t k = 0; k < tiers.size(); ++k) {
        const std::string key = "tiers[" + std::to_string(k) + "]";
        const json& t = tiers[k];
        if (!t.is_object()) throw ModelError(key, "must be an object");
        for (const auto& [field, value] : t.items()) {
            if (field != "multiplicity" && field != "c" && field != "lambda") {
                throw ModelError(key + "." + field, "unknown tier key");
            }
        }
        TierConfig tier;
        tier.multiplicity = t.contains("multiplicity") ? require_int(t, "multiplicity", key + ".multiplicity") : 1;
        if (!t.contains("c")) throw ModelError(key + ".c", "missing required field");
        tier.ratio = parse_ratio(t.at("c"), key + ".c");
        if (t.contains("lambda")) {
            if (!t.at("lambda").is_number()) throw ModelError(key + ".lambda", "must be a number");
            tier.eigenvalue = t.at("lambda").get<double>();
        }
        config.tiers.push_back(tier);
    }

    const std::string basis = doc.value("basis", std::string("identity"));
    if (doc.contains("basis") && !doc.at("basis").is_string()) throw ModelError("basis", "must be a string");
    if (basis == "identity") {
        config.basis = BasisSpec::identity();
    } else if (basis == "random-orthogonal") {
        std::uint64_t seed = 0;
        if (doc.contains("basis_seed")) {
            if (!doc.at("basis_seed").is_number_unsigned()) throw ModelError("basis_seed", "must be a non-negative integer");
            seed = doc.at("basis_seed").get<std::uint64_t>();
        }
        config.basis = BasisSpec::random_orthogonal(seed);
    } else {
        throw ModelError("basis", "must be \"identity\" or \"random-orthogonal\"");
    }

    if (doc.contains("mean")) {
        const json& mean = doc.at("mean");
        if (mean.is_string()) {
            if (mean.get<std::string>() != "zero") throw ModelError("mean", "must be \"zero\" or an array of numbers");
        } else if (mean.is_array()) {
            Eigen::VectorXd xi(static_cast<Eigen::Index>(mean.size()));
            for (std::size_t i = 0; i < mean.size(); ++i) {
                if (!mean[i].is_number()) throw ModelError("mean", "entries must be numbers");
                xi(static_cast<Eigen::Index>(i)) = mean[i].get<double>();
            }
            config.mean = std::move(xi);
        } else {
            throw ModelError("mean", "must be \"zero\" or an array of numbers");
        }
    }

    if (doc.contains("min_spike")) {
        if (!doc.at("min_spike").is_number()) throw ModelError("min_spike", "must be a number");
        config.min_spike = doc.at("min_spike").get<double>();
    }
    return config;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("config", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ModelError("config", path.string() + " is not valid JSON: " + e.what());
    }
    return model_config_from_json(doc);
}

json model_config_to_json(const ModelConfig& config) {
    json doc;
    doc["d"] = config.d;
    doc["n"] = config.n;
    doc["tiers"] = json::array();
    for (const TierConfig& tier : config.tiers) {
        json t;
        t["multiplicity"] = tier.multiplicity;
        if (tier.ratio.is_finite()) {
            t["c"] = tier.ratio.value();
        } else {
            t["c"] = tier.ratio.to_string();
        }
        if (tier.eigenvalue) t["lambda"] = *tier.eigenvalue;
        doc["tiers"].push_back(t);
    }
    switch (config.basis.kind) {
        case BasisKind::RandomOrthogonal:
            doc["basis"] = "random-orthogonal";
            doc["basis_seed"] = config.basis.seed;
            break;
        case BasisKind::Identity: doc["basis"] = "identity"; break;
        case BasisKind::ExplicitOrthonormal: throw ModelError("basis", "explicit bases have no JSON form");
    }
    if (config.mean) {
        doc["mean"] = std::vector<double>(config.mean->data(), config.mean->data() + config.mean->size());
    } else {
        doc["mean"] = "zero";
    }
    doc["min_spike"] = config.min_spike;
    return doc;
}

}  // namespace spikelab
