#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

#include "distillfed/common.hpp"

namespace distillfed {

enum class KernelKind { rbf, arccos_ntk };
enum class RegMode { absolute, trace_scaled };

struct KernelSpec {
    KernelKind kind = KernelKind::rbf;
    double sigma = 1.0;  // rbf bandwidth
    int depth = 4;       // arccos_ntk dense-layer count

    // trace_scaled: lambda = reg * mean(diag G), so regularization follows the
    // kernel's scale. absolute: lambda = reg as given.
    RegMode reg_mode = RegMode::trace_scaled;
    double reg = 1e-6;

    void validate() const {
        if (kind == KernelKind::rbf && !(sigma > 0.0))
            throw std::invalid_argument("KernelSpec: rbf bandwidth must be > 0");
        if (kind == KernelKind::arccos_ntk && depth < 1)
            throw std::invalid_argument("KernelSpec: ntk depth must be >= 1");
        if (!(reg > 0.0)) throw std::invalid_argument("KernelSpec: regularization must be > 0");
    }
};

/// Distilled support set: points plus soft label rows that each sum to 1.
struct SupportSet {
    Matrix points;  // s x d
    Matrix labels;  // s x num_classes

    Index size() const { return points.rows(); }

    void validate() const {
        if (points.rows() < 1) throw std::invalid_argument("SupportSet: empty");
        if (points.rows() != labels.rows())
            throw std::invalid_argument("SupportSet: point/label row mismatch");
        for (Index i = 0; i < labels.rows(); ++i)
            if (std::abs(labels.row(i).sum() - 1.0) > 1e-9)
                throw std::invalid_argument("SupportSet: label row " + std::to_string(i) +
                                            " does not sum to 1");
    }
};

namespace detail {

inline Matrix pairwise_sqdist(const Matrix& A, const Matrix& B) {
    Vector an = A.rowwise().squaredNorm();
    Vector bn = B.rowwise().squaredNorm();
    Matrix d = (-2.0 * A * B.transpose()).colwise() + an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

inline Matrix rbf_matrix(const Matrix& A, const Matrix& B, double sigma) {
    return (pairwise_sqdist(A, B) / (-2.0 * sigma * sigma)).array().exp().matrix();
}

// Infinite-width fully connected ReLU NTK of the given depth (number of dense
// layers). Depth 1 is the plain linear kernel x.y/d; every further layer runs
// one arc-cosine covariance step. Per-row variances stay constant across
// layers because the ReLU arc-cosine map is norm-preserving on the diagonal.
inline Matrix ntk_matrix(const Matrix& A, const Matrix& B, int depth) {
    const double d = static_cast<double>(A.cols());
    Vector va = A.rowwise().squaredNorm() / d;
    Vector vb = B.rowwise().squaredNorm() / d;
    Matrix sig = (A * B.transpose()) / d;
    Matrix theta = sig;
    constexpr double pi = std::numbers::pi;
    for (int layer = 2; layer <= depth; ++layer) {
        for (Index i = 0; i < sig.rows(); ++i) {
            for (Index j = 0; j < sig.cols(); ++j) {
                double norm = std::sqrt(va[i] * vb[j]);
                double u = norm > 0.0 ? std::clamp(sig(i, j) / norm, -1.0, 1.0) : 1.0;
                double th = std::acos(u);
                double k1 = (std::sqrt(std::max(0.0, 1.0 - u * u)) + (pi - th) * u) / pi;
                double k0 = (pi - th) / pi;
                sig(i, j) = norm * k1;
                theta(i, j) = sig(i, j) + k0 * theta(i, j);
            }
        }
    }
    return theta;
}

}  // namespace detail

inline Matrix kernel_matrix(const Matrix& A, const Matrix& B, const KernelSpec& spec) {
    spec.validate();
    if (A.cols() != B.cols())
        throw std::invalid_argument("kernel_matrix: dimension mismatch (" + std::to_string(A.cols()) +
                                    " vs " + std::to_string(B.cols()) + ")");
    return spec.kind == KernelKind::rbf ? detail::rbf_matrix(A, B, spec.sigma)
                                        : detail::ntk_matrix(A, B, spec.depth);
}

inline double effective_reg(const KernelSpec& spec, const Matrix& gram) {
    return spec.reg_mode == RegMode::absolute ? spec.reg : spec.reg * gram.diagonal().mean();
}

/// Solves (gram + lambda I) X = rhs by Cholesky, escalating the jitter to 10x
/// and 100x before giving up. Never returns non-finite values silently.
inline Matrix spd_solve(const Matrix& gram, double lambda, const Matrix& rhs) {
    if (gram.rows() != gram.cols() || gram.rows() != rhs.rows())
        throw std::invalid_argument("spd_solve: shape mismatch");
    for (double mult : {1.0, 10.0, 100.0}) {
        Matrix m = gram;
        m.diagonal().array() += lambda * mult;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success) continue;
        Matrix sol = llt.solve(rhs);
        if (sol.allFinite()) return sol;
    }
    throw NumericError("spd_solve: Cholesky failed up to 100x regularization (lambda=" +
                       std::to_string(lambda) + ", n=" + std::to_string(gram.rows()) + ")");
}

/// KRR dual coefficients alpha = (K(support,support) + lambda I)^-1 labels.
inline Matrix krr_coefficients(const SupportSet& support, const KernelSpec& spec) {
    support.validate();
    Matrix gram = kernel_matrix(support.points, support.points, spec);
    return spd_solve(gram, effective_reg(spec, gram), support.labels);
}

inline Matrix krr_predict(const SupportSet& support, const Matrix& X, const KernelSpec& spec) {
    return kernel_matrix(X, support.points, spec) * krr_coefficients(support, spec);
}

/// Half the squared Frobenius distance between one-hot targets and the KRR
/// predictions induced by the support set.
inline double kip_loss(const SupportSet& support, const Matrix& X, const Matrix& Y,
                       const KernelSpec& spec) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("kip_loss: target row mismatch");
    Matrix residual = krr_predict(support, X, spec) - Y;
    double loss = 0.5 * residual.squaredNorm();
    if (!std::isfinite(loss)) throw NumericError("kip_loss: non-finite loss");
    return loss;
}

namespace detail {

// Analytic gradient of the rbf KIP loss with respect to the support points,
// differentiating both kernel blocks through the regularized solve. The
// regularizer itself is constant here: absolute mode by definition, and
// trace_scaled mode because the rbf diagonal is identically 1.
inline Matrix kip_grad_rbf(const SupportSet& support, const Matrix& X, const Matrix& Y,
                           const KernelSpec& spec) {
    const Matrix& Xs = support.points;
    Matrix gram = rbf_matrix(Xs, Xs, spec.sigma);
    const double lambda = effective_reg(spec, gram);
    Matrix kxs = rbf_matrix(X, Xs, spec.sigma);

    Matrix alpha = spd_solve(gram, lambda, support.labels);  // s x C
    Matrix residual = kxs * alpha - Y;                       // n x C
    Matrix beta = spd_solve(gram, lambda, kxs.transpose() * residual);

    // Cross-block term: sensitivity of K(X, Xs) entries.
    Matrix u = (residual * alpha.transpose()).cwiseProduct(kxs);  // n x s
    Vector ucol = u.colwise().sum().transpose();
    Matrix grad = u.transpose() * X - ucol.asDiagonal() * Xs;

    // Gram-block term: symmetric sensitivity of K(Xs, Xs) entries.
    Matrix nmat = -(beta * alpha.transpose() + alpha * beta.transpose());
    Matrix v = nmat.cwiseProduct(gram);
    Vector vrow = v.rowwise().sum();
    grad += v * Xs - vrow.asDiagonal() * Xs;

    return grad / (spec.sigma * spec.sigma);
}

inline Matrix kip_grad_fd(const SupportSet& support, const Matrix& X, const Matrix& Y,
                          const KernelSpec& spec) {
    constexpr double h = 1e-5;
    SupportSet probe = support;
    Matrix grad(support.points.rows(), support.points.cols());
    for (Index i = 0; i < grad.rows(); ++i) {
        for (Index j = 0; j < grad.cols(); ++j) {
            const double saved = probe.points(i, j);
            probe.points(i, j) = saved + h;
            double up = kip_loss(probe, X, Y, spec);
            probe.points(i, j) = saved - h;
            double down = kip_loss(probe, X, Y, spec);
            probe.points(i, j) = saved;
            grad(i, j) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

}  // namespace detail

/// Gradient of kip_loss with respect to the support points. rbf uses the
/// closed form; arccos_ntk falls back to central differences, which is exact
/// enough for the small support sets distillation works with.
inline Matrix kip_grad(const SupportSet& support, const Matrix& X, const Matrix& Y,
                       const KernelSpec& spec) {
    support.validate();
    spec.validate();
    if (X.rows() != Y.rows()) throw std::invalid_argument("kip_grad: target row mismatch");
    Matrix grad = spec.kind == KernelKind::rbf ? detail::kip_grad_rbf(support, X, Y, spec)
                                               : detail::kip_grad_fd(support, X, Y, spec);
    if (!grad.allFinite()) throw NumericError("kip_grad: non-finite gradient");
    return grad;
}

}  // namespace distillfed
