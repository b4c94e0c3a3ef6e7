// Half-spaces through empirical medians. Their r-extensions are exact and
// one-dimensional, which keeps every concentration estimate a scalar problem.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "subloc/sampler.hpp"
#include "subloc/stats.hpp"

namespace subloc {

struct HalfSpace {
    VectorXd theta;  // unit direction
    double m = 0.0;  // offset, median by construction

    bool contains(const VectorXd& x) const { return x.dot(theta) <= m; }
    // Euclidean distance to S = {x . theta <= m}
    double distance(const VectorXd& x) const { return std::max(x.dot(theta) - m, 0.0); }
};

inline HalfSpace median_halfspace(const SampleBatch& b, VectorXd theta) {
    if (b.count() == 0) throw std::invalid_argument("median_halfspace: empty batch");
    const double norm = theta.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("median_halfspace: zero direction");
    theta /= norm;
    std::vector<double> proj(b.count());
    for (int j = 0; j < b.count(); ++j) proj[j] = b.points.col(j).dot(theta);
    HalfSpace hs;
    hs.theta = std::move(theta);
    if (b.weighted()) {
        std::vector<double> w(b.weights.data(), b.weights.data() + b.count());
        hs.m = weighted_median(std::move(proj), &w);
    } else {
        hs.m = weighted_median(std::move(proj));
    }
    return hs;
}

}  // namespace subloc
