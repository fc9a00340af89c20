#pragma once

// Contrastive objectives on embedding matrices: the symmetric image-text
// cross-entropy (with analytic gradient), the random-view contrast and the
// importance-weighted hard-negative loss.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace viewsphere {

using Matrix = Eigen::MatrixXd;

struct EmbeddingBatch {
    Matrix Zv;  ///< N x D viewpoint embeddings
    Matrix Zq;  ///< N x D query embeddings
    Matrix Zr;  ///< M x D random-viewpoint embeddings, may be empty
};

struct LossConfig {
    double tau = 0.07;
    double G = 1.0;
    double beta_hard = 1.0;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

struct ContrastiveResult {
    double loss = 0.0;
    double v_to_q = 0.0;
    double q_to_v = 0.0;
    std::vector<double> row_losses_v_to_q;
    std::vector<double> row_losses_q_to_v;
    Matrix grad_v;
    Matrix grad_q;
};

struct LossBreakdown {
    double contrastive = 0.0;
    double random = 0.0;
    double hard = 0.0;
    double total = 0.0;
};

namespace detail {

inline Matrix row_normalized(const Matrix& z, const char* name) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double n = z.row(i).norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw std::invalid_argument(std::string(name) + " row " + std::to_string(i) + " has zero or non-finite norm");
        }
        out.row(i) = z.row(i) / n;
    }
    return out;
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
    const double m = x.maxCoeff();
    return m + std::log((x.array() - m).exp().sum());
}

inline void require_same_dim(const Matrix& a, const Matrix& b, const char* what) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": embedding dimensions differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.cols()) + ")");
    }
}

}  // namespace detail

/// Symmetric cross-entropy over the N x N cosine matrix scaled by 1/tau.
inline ContrastiveResult contrastive_loss(const Matrix& Zv, const Matrix& Zq, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("contrastive_loss: tau must be positive");
    }
    if (Zv.rows() != Zq.rows()) {
        throw std::invalid_argument("contrastive_loss: Zv and Zq must have the same number of rows");
    }
    detail::require_same_dim(Zv, Zq, "contrastive_loss");
    const Eigen::Index n = Zv.rows();
    if (n < 2) {
        throw std::invalid_argument("contrastive_loss: need at least two pairs");
    }
    const Matrix U = detail::row_normalized(Zv, "Zv");
    const Matrix W = detail::row_normalized(Zq, "Zq");
    const Matrix S = U * W.transpose() / tau;

    ContrastiveResult res;
    res.row_losses_v_to_q.resize(static_cast<std::size_t>(n));
    res.row_losses_q_to_v.resize(static_cast<std::size_t>(n));
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix dS = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd row = S.row(i).transpose();
        const double lse = detail::log_sum_exp(row);
        res.row_losses_v_to_q[static_cast<std::size_t>(i)] = lse - S(i, i);
        dS.row(i) += ((row.array() - lse).exp().matrix() * inv_n).transpose();
        dS(i, i) -= inv_n;

        const Eigen::VectorXd col = S.col(i);
        const double lse_c = detail::log_sum_exp(col);
        res.row_losses_q_to_v[static_cast<std::size_t>(i)] = lse_c - S(i, i);
        dS.col(i) += (col.array() - lse_c).exp().matrix() * inv_n;
        dS(i, i) -= inv_n;
    }
    for (std::size_t i = 0; i < res.row_losses_v_to_q.size(); ++i) {
        res.v_to_q += res.row_losses_v_to_q[i] * inv_n;
        res.q_to_v += res.row_losses_q_to_v[i] * inv_n;
    }
    res.loss = res.v_to_q + res.q_to_v;

    const Matrix dU = dS * W / tau;
    const Matrix dW = dS.transpose() * U / tau;
    res.grad_v.resize(n, Zv.cols());
    res.grad_q.resize(n, Zq.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double nv = Zv.row(i).norm();
        const double nq = Zq.row(i).norm();
        res.grad_v.row(i) = (dU.row(i) - dU.row(i).dot(U.row(i)) * U.row(i)) / nv;
        res.grad_q.row(i) = (dW.row(i) - dW.row(i).dot(W.row(i)) * W.row(i)) / nq;
    }
    return res;
}

/// Per query row i: softmax cross-entropy of the positive cos(v_i, q_i)
/// against cos(r_j, q_i) for every random view r_j.
inline double random_contrast_loss(const Matrix& Zv, const Matrix& Zq, const Matrix& Zr, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("random_contrast_loss: tau must be positive");
    }
    if (Zr.rows() == 0) {
        throw std::invalid_argument("random_contrast_loss: random-view pool is empty");
    }
    if (Zv.rows() != Zq.rows() || Zv.rows() == 0) {
        throw std::invalid_argument("random_contrast_loss: Zv and Zq must have the same, non-zero number of rows");
    }
    detail::require_same_dim(Zv, Zq, "random_contrast_loss");
    detail::require_same_dim(Zv, Zr, "random_contrast_loss");
    const Matrix U = detail::row_normalized(Zv, "Zv");
    const Matrix W = detail::row_normalized(Zq, "Zq");
    const Matrix R = detail::row_normalized(Zr, "Zr");
    const Matrix neg = W * R.transpose() / tau;
    double total = 0.0;
    Eigen::VectorXd logits(Zr.rows() + 1);
    for (Eigen::Index i = 0; i < Zv.rows(); ++i) {
        logits(0) = U.row(i).dot(W.row(i)) / tau;
        logits.tail(Zr.rows()) = neg.row(i).transpose();
        total += detail::log_sum_exp(logits) - logits(0);
    }
    return total / static_cast<double>(Zv.rows());
}

/// Mean over anchors of -ln(e^{f+} / (e^{f+} + G * E_w[e^{f-}])) where f is
/// cosine similarity and w_j is proportional to e^{beta_hard * f-_j}. With
/// exclude_paired, pool row i is not a negative for anchor i.
inline double hard_negative_loss(const Matrix& anchors, const Matrix& positives, const Matrix& pool, double G,
                                 double beta_hard, bool exclude_paired = false) {
    if (G < 0.0 || !std::isfinite(G)) {
        throw std::invalid_argument("hard_negative_loss: G must be non-negative");
    }
    if (beta_hard < 0.0 || !std::isfinite(beta_hard)) {
        throw std::invalid_argument("hard_negative_loss: beta_hard must be non-negative");
    }
    if (anchors.rows() != positives.rows() || anchors.rows() == 0) {
        throw std::invalid_argument("hard_negative_loss: anchors and positives must have the same, non-zero number of rows");
    }
    if (pool.rows() == 0 || (exclude_paired && pool.rows() < 2)) {
        throw std::invalid_argument("hard_negative_loss: negative pool is empty");
    }
    if (exclude_paired && pool.rows() != anchors.rows()) {
        throw std::invalid_argument("hard_negative_loss: paired exclusion needs one pool row per anchor");
    }
    detail::require_same_dim(anchors, positives, "hard_negative_loss");
    detail::require_same_dim(anchors, pool, "hard_negative_loss");
    const Matrix A = detail::row_normalized(anchors, "anchors");
    const Matrix P = detail::row_normalized(positives, "positives");
    const Matrix Q = detail::row_normalized(pool, "pool");
    const Matrix F = A * Q.transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double fp = A.row(i).dot(P.row(i));
        if (G == 0.0) {
            continue;
        }
        // weights and values are shifted by the row maximum for stability
        double fmax = -2.0;
        for (Eigen::Index j = 0; j < Q.rows(); ++j) {
            if (!(exclude_paired && j == i)) fmax = std::max(fmax, F(i, j));
        }
        double wsum = 0.0, wval = 0.0;
        for (Eigen::Index j = 0; j < Q.rows(); ++j) {
            if (exclude_paired && j == i) continue;
            const double w = std::exp(beta_hard * (F(i, j) - fmax));
            wsum += w;
            wval += w * std::exp(F(i, j) - fmax);
        }
        const double expectation_scaled = wval / wsum;  // E_w[e^{f-}] * e^{-fmax}
        // -ln(e^fp / (e^fp + G e^fmax x)) = ln(1 + G x e^{fmax - fp})
        total += std::log1p(G * expectation_scaled * std::exp(fmax - fp));
    }
    return total / static_cast<double>(A.rows());
}

/// alpha * L_vq + beta * L_r + gamma * L_h. Anchors are the queries,
/// positives their paired views, negatives the other views of the batch.
/// Components with zero weight are not evaluated.
inline LossBreakdown total_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.beta < 0.0 || cfg.gamma < 0.0) {
        throw std::invalid_argument("total_loss: objective weights must be non-negative");
    }
    LossBreakdown out;
    if (cfg.alpha != 0.0) {
        out.contrastive = contrastive_loss(batch.Zv, batch.Zq, cfg.tau).loss;
    }
    if (cfg.beta != 0.0) {
        out.random = random_contrast_loss(batch.Zv, batch.Zq, batch.Zr, cfg.tau);
    }
    if (cfg.gamma != 0.0) {
        out.hard = hard_negative_loss(batch.Zq, batch.Zv, batch.Zv, cfg.G, cfg.beta_hard, true);
    }
    out.total = cfg.alpha * out.contrastive + cfg.beta * out.random + cfg.gamma * out.hard;
    return out;
}

}  // namespace viewsphere
