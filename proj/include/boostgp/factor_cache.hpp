#pragma once

#include <cstdio>
#include <cstdlib>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "boostgp/densities.hpp"

namespace boostgp {

/// Canonical cache key: the length scale rounded to 12 significant digits.
inline double round_sig12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12e", v);
    return std::strtod(buf, nullptr);
}

/// Memoizes Cholesky factors of K(l) + h X X^T keyed by the rounded length
/// scale, plus the shared nonspatial factor (K = I). LRU-bounded; safe for
/// concurrent lookup/insert from per-gene worker threads.
class FactorCache {
public:
    FactorCache(Eigen::MatrixXd distances, Eigen::MatrixXd X, double h, size_t capacity = 128)
        : d_(std::move(distances)), X_(std::move(X)), h_(h), capacity_(capacity),
          nonspatial_(make_nonspatial_factor(d_.rows(), X_, h_)) {}

    const Eigen::MatrixXd& distances() const { return d_; }
    const Eigen::MatrixXd& design() const { return X_; }
    double h() const { return h_; }

    std::shared_ptr<const MarginalFactor> nonspatial() const { return nonspatial_; }

    std::shared_ptr<const MarginalFactor> spatial(double length_scale) {
        const double key = round_sig12(length_scale);
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto it = map_.find(key);
            if (it != map_.end()) {
                order_.splice(order_.begin(), order_, it->second.first);
                ++hits_;
                return it->second.second;
            }
        }
        // Build outside the lock; duplicated work on a race is harmless
        // because the factorization is deterministic.
        auto factor = make_spatial_factor(d_, key, X_, h_);
        std::lock_guard<std::mutex> lock(mu_);
        const auto it = map_.find(key);
        if (it != map_.end()) {
            order_.splice(order_.begin(), order_, it->second.first);
            return it->second.second;
        }
        order_.push_front(key);
        map_.emplace(key, std::make_pair(order_.begin(), factor));
        ++misses_;
        while (map_.size() > capacity_) {
            map_.erase(order_.back());
            order_.pop_back();
        }
        return factor;
    }

    size_t hits() const { return hits_; }
    size_t misses() const { return misses_; }

private:
    Eigen::MatrixXd d_;
    Eigen::MatrixXd X_;
    double h_;
    size_t capacity_;
    std::shared_ptr<const MarginalFactor> nonspatial_;

    std::mutex mu_;
    std::list<double> order_;
    std::unordered_map<double, std::pair<std::list<double>::iterator,
                                         std::shared_ptr<const MarginalFactor>>>
        map_;
    size_t hits_ = 0;
    size_t misses_ = 0;
};

} // namespace boostgp
