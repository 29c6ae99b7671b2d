#pragma once

// Source reward rewrite r <- r - eta * delta_r(s, a, s').

#include <algorithm>
#include <cmath>
#include <vector>

#include "dara/classifier.hpp"
#include "dara/dataset.hpp"

namespace dara {

struct AugmentConfig {
    double eta = 0.1;
    bool record_delta = false;
    // Deterministic source dynamics make the true log-ratio -log T(s'|s,a) >= 0
    // on every source record, so negative estimates can only be error.
    bool floor_zero = false;

    void validate() const {
        if (!std::isfinite(eta) || eta < 0) throw InputError("eta must be finite and non-negative");
    }
};

/// Reward bound trainers must assume after augmentation.
inline double augmented_reward_bound(const AugmentConfig& cfg, double r_max, double clip_bound = 10.0) {
    return r_max + cfg.eta * clip_bound;
}

/// Works with any scorer exposing `std::vector<double> delta_r(const OfflineDataset&)`.
template <class Scorer>
OfflineDataset augment_dataset(const OfflineDataset& source, const Scorer& scorer, const AugmentConfig& cfg) {
    cfg.validate();
    if (source.any_masked()) throw InputError("cannot augment a dataset whose rewards are masked");
    std::vector<double> d = scorer.delta_r(source);
    if (cfg.floor_zero)
        for (double& v : d) v = std::max(v, 0.0);
    OfflineDataset out = source;
    for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].r = source.rows[i].r - cfg.eta * d[i];
    out.meta.augmented = true;
    out.meta.eta = cfg.eta;
    out.delta_r.clear();
    if (cfg.record_delta) out.delta_r = std::move(d);
    return out;
}

}  // namespace dara
