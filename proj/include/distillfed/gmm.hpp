#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "distillfed/common.hpp"
#include "distillfed/rng.hpp"

namespace distillfed {

/// Diagonal-covariance Gaussian mixture.
struct GmmModel {
    Matrix means;      // M x d
    Matrix variances;  // M x d, every entry kept >= the fit's floor
    Vector weights;    // length M, sums to 1
    std::vector<double> loglik_trace;

    int components() const { return static_cast<int>(means.rows()); }

    void validate() const {
        if (means.rows() < 1) throw std::invalid_argument("GmmModel: no components");
        if (variances.rows() != means.rows() || variances.cols() != means.cols() ||
            weights.size() != means.rows())
            throw std::invalid_argument("GmmModel: inconsistent shapes");
        if ((variances.array() <= 0.0).any())
            throw std::invalid_argument("GmmModel: non-positive variance");
        if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-9)
            throw std::invalid_argument("GmmModel: weights must be a distribution");
    }
};

namespace detail {

// Log responsibilities and total log-likelihood under the current model.
inline std::pair<Matrix, double> gmm_e_step(const Matrix& points, const GmmModel& model) {
    const Index n = points.rows(), d = points.cols();
    const Index m = model.means.rows();
    Matrix logp(n, m);
    constexpr double log2pi = 1.8378770664093453;  // ln(2*pi)
    for (Index c = 0; c < m; ++c) {
        double logw = std::log(std::max(model.weights[c], 1e-300));
        double logdet = model.variances.row(c).array().log().sum();
        for (Index i = 0; i < n; ++i) {
            double quad = ((points.row(i) - model.means.row(c)).array().square() /
                           model.variances.row(c).array())
                              .sum();
            logp(i, c) = logw - 0.5 * (static_cast<double>(d) * log2pi + logdet + quad);
        }
    }
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        double mx = logp.row(i).maxCoeff();
        double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
        logp.row(i).array() = (logp.row(i).array() - lse).exp();
        total += lse;
    }
    return {std::move(logp), total};  // logp now holds responsibilities
}

}  // namespace detail

/// One EM iteration: E-step under `model`, then the M-step update. Returns the
/// log-likelihood of `model` itself (before the update), so consecutive values
/// across iterations are non-decreasing. A component that receives (almost) no
/// responsibility is reseeded at the point farthest from every current mean
/// (ties: lowest row index) with the global per-dimension variance.
inline double gmm_em_step(const Matrix& points, GmmModel& model, double eps_floor) {
    const Index n = points.rows(), d = points.cols();
    auto [resp, loglik] = detail::gmm_e_step(points, model);

    Vector counts = resp.colwise().sum().transpose();
    Vector global_var(d);
    for (Index j = 0; j < d; ++j) {
        double mu = points.col(j).mean();
        global_var[j] = std::max((points.col(j).array() - mu).square().mean(), eps_floor);
    }

    for (Index c = 0; c < model.means.rows(); ++c) {
        if (counts[c] < 1e-10) {
            Index far = 0;
            double best = -1.0;
            for (Index i = 0; i < n; ++i) {
                double nearest = 1e300;
                for (Index q = 0; q < model.means.rows(); ++q)
                    nearest = std::min(nearest,
                                       (points.row(i) - model.means.row(q)).squaredNorm());
                if (nearest > best) {
                    best = nearest;
                    far = i;
                }
            }
            model.means.row(c) = points.row(far);
            model.variances.row(c) = global_var.transpose();
            counts[c] = 1.0;  // acts as a single-point component this round
            continue;
        }
        double nc = counts[c];
        model.means.row(c) = (resp.col(c).transpose() * points) / nc;
        for (Index j = 0; j < d; ++j) {
            double s = (resp.col(c).array() * (points.col(j).array() - model.means(c, j)).square())
                           .sum();
            model.variances(c, j) = std::max(s / nc, eps_floor);
        }
    }
    model.weights = counts / counts.sum();
    return loglik;
}

/// Fits a diagonal GMM with seeded k-means++ initialization and EM. Stops when
/// the log-likelihood gain drops below tol or after max_iter E-steps. The
/// trace records the likelihood of the parameters entering each iteration.
inline GmmModel fit_gmm(const Matrix& points, int num_components, std::uint64_t seed,
                        int max_iter = 100, double tol = 1e-6, double eps_floor = 1e-6) {
    const Index n = points.rows(), d = points.cols();
    if (num_components < 1) throw std::invalid_argument("fit_gmm: need at least one component");
    if (n < num_components)
        throw std::invalid_argument("fit_gmm: fewer points (" + std::to_string(n) +
                                    ") than components (" + std::to_string(num_components) + ")");

    auto rng = make_rng(seed);
    GmmModel model;
    model.means.resize(num_components, d);
    model.variances.resize(num_components, d);
    model.weights = Vector::Constant(num_components, 1.0 / num_components);

    // k-means++ seeding: first center uniform, then proportional to squared
    // distance from the nearest chosen center.
    std::vector<double> dist2(static_cast<std::size_t>(n), 1.0);
    model.means.row(0) = points.row(static_cast<Index>(sample_weighted(rng, dist2)));
    for (int c = 1; c < num_components; ++c) {
        for (Index i = 0; i < n; ++i) {
            double nearest = 1e300;
            for (int q = 0; q < c; ++q)
                nearest = std::min(nearest, (points.row(i) - model.means.row(q)).squaredNorm());
            dist2[static_cast<std::size_t>(i)] = nearest;
        }
        model.means.row(c) = points.row(static_cast<Index>(sample_weighted(rng, dist2)));
    }
    for (Index j = 0; j < d; ++j) {
        double mu = points.col(j).mean();
        double var = std::max((points.col(j).array() - mu).square().mean(), eps_floor);
        model.variances.col(j).setConstant(var);
    }

    for (int iter = 0; iter < max_iter; ++iter) {
        double ll = gmm_em_step(points, model, eps_floor);
        model.loglik_trace.push_back(ll);
        if (iter > 0 && ll - model.loglik_trace[static_cast<std::size_t>(iter) - 1] < tol) break;
    }
    model.validate();
    return model;
}

}  // namespace distillfed
