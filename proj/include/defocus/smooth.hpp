#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "defocus/comprender.hpp"
#include "defocus/image.hpp"

namespace defocus {

struct SmoothConfig {
    double sigma_xy = 8.0;   // spatial falloff of the bilateral affinity, pixels
    double sigma_color = 0.1;
    double lambda = 1.0;     // smoothness weight against the data term
    int cg_iters = 200;
    double cg_tol = 1e-6;
};

/// Per-pixel smoothing confidence: channel-stacked forward-difference
/// gradient magnitude, normalized to [0,1] by its max, floored at 1e-3.
inline Image confidence_from_image(const Image& img) {
    const int h = img.height, w = img.width, ch = img.channels;
    Image conf(h, w, 1, 0.0);
    double mx = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) {
                double gx = x + 1 < w ? img.at(y, x + 1, c) - img.at(y, x, c) : 0.0;
                double gy = y + 1 < h ? img.at(y + 1, x, c) - img.at(y, x, c) : 0.0;
                acc += gx * gx + gy * gy;
            }
            double g = std::sqrt(acc);
            conf.at(y, x, 0) = g;
            mx = std::max(mx, g);
        }
    }
    constexpr double kFloor = 1e-3;
    for (double& v : conf.data) v = mx > 0.0 ? std::max(v / mx, kFloor) : kFloor;
    return conf;
}

/// The SPD system behind the edge-aware weighted least squares: A = C +
/// lambda * L, with C = diag(conf) and L the 4-neighbour graph Laplacian
/// under bilateral affinities from the guide image. Build once per guide and
/// reuse for repeated solves and the adjoint solve.
class EdgeAwareSystem {
public:
    EdgeAwareSystem(const Image& guide, const Image& conf, const SmoothConfig& cfg)
        : h_(guide.height), w_(guide.width), cfg_(cfg), conf_(conf) {
        if (conf.height != h_ || conf.width != w_ || conf.channels != 1)
            throw std::invalid_argument("EdgeAwareSystem: confidence shape mismatch");
        const double spatial = std::exp(-1.0 / (2.0 * cfg.sigma_xy * cfg.sigma_xy));
        const double inv2sc = 1.0 / (2.0 * cfg.sigma_color * cfg.sigma_color);
        wx_.assign(static_cast<size_t>(h_) * w_, 0.0);
        wy_.assign(static_cast<size_t>(h_) * w_, 0.0);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                size_t i = static_cast<size_t>(y) * w_ + x;
                if (x + 1 < w_)
                    wx_[i] = spatial * std::exp(-color_dist2(guide, y, x, y, x + 1) * inv2sc);
                if (y + 1 < h_)
                    wy_[i] = spatial * std::exp(-color_dist2(guide, y, x, y + 1, x) * inv2sc);
            }
        }
    }

    int height() const { return h_; }
    int width() const { return w_; }

    /// y = A x, matrix-free.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const double lam = cfg_.lambda;
        parallel_for(static_cast<std::int64_t>(h_), [&](std::int64_t yy) {
            int r = static_cast<int>(yy);
            for (int c = 0; c < w_; ++c) {
                size_t i = static_cast<size_t>(r) * w_ + c;
                double acc = conf_.data[i] * x[i];
                if (c + 1 < w_) acc += lam * wx_[i] * (x[i] - x[i + 1]);
                if (c > 0) acc += lam * wx_[i - 1] * (x[i] - x[i - 1]);
                if (r + 1 < h_) acc += lam * wy_[i] * (x[i] - x[i + w_]);
                if (r > 0) acc += lam * wy_[i - w_] * (x[i] - x[i - w_]);
                y[i] = acc;
            }
        });
    }

    struct SolveStatus {
        int iterations = 0;
        double residual = 0.0;
        bool converged = false;
    };

    /// Conjugate gradient on A x = b from x = 0. Never fails hard: on budget
    /// exhaustion the best iterate is returned with converged = false.
    SolveStatus solve(const std::vector<double>& b, std::vector<double>& x) const {
        const size_t n = b.size();
        x.assign(n, 0.0);
        std::vector<double> r = b, p = b, ap(n);
        double bnorm = std::sqrt(dot(b, b));
        SolveStatus st;
        if (bnorm == 0.0) {
            st.converged = true;
            return st;
        }
        double rr = dot(r, r);
        for (int it = 0; it < cfg_.cg_iters; ++it) {
            apply(p, ap);
            double pap = dot(p, ap);
            if (pap <= 0.0) break;
            double alpha = rr / pap;
            for (size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
            for (size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
            double rr_new = dot(r, r);
            st.iterations = it + 1;
            st.residual = std::sqrt(rr_new) / bnorm;
            if (st.residual <= cfg_.cg_tol) {
                st.converged = true;
                return st;
            }
            double beta = rr_new / rr;
            rr = rr_new;
            for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        }
        st.residual = std::sqrt(rr) / bnorm;
        st.converged = st.residual <= cfg_.cg_tol;
        return st;
    }

    /// Solves A z = C t for the smoothed field. With lambda = 0 the system is
    /// diagonal and the target passes through exactly.
    SolveStatus smooth(const std::vector<double>& target, std::vector<double>& z) const {
        if (cfg_.lambda == 0.0) {
            z = target;
            return {0, 0.0, true};
        }
        std::vector<double> b(target.size());
        for (size_t i = 0; i < b.size(); ++i) b[i] = conf_.data[i] * target[i];
        return solve(b, z);
    }

    /// Adjoint: since z* = A^-1 C t and A is symmetric, dLoss/dt = C A^-1 g.
    SolveStatus smooth_adjoint(const std::vector<double>& upstream, std::vector<double>& dt) const {
        if (cfg_.lambda == 0.0) {
            dt = upstream;
            return {0, 0.0, true};
        }
        std::vector<double> y;
        SolveStatus st = solve(upstream, y);
        dt.resize(upstream.size());
        for (size_t i = 0; i < dt.size(); ++i) dt[i] = conf_.data[i] * y[i];
        return st;
    }

private:
    static double color_dist2(const Image& g, int y0, int x0, int y1, int x1) {
        double acc = 0.0;
        for (int c = 0; c < g.channels; ++c) {
            double d = g.at(y0, x0, c) - g.at(y1, x1, c);
            acc += d * d;
        }
        return acc;
    }

    static double dot(const std::vector<double>& a, const std::vector<double>& b) {
        return parallel_sum(static_cast<std::int64_t>(a.size()),
                            [&](std::int64_t i) { return a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)]; });
    }

    int h_, w_;
    SmoothConfig cfg_;
    Image conf_;
    std::vector<double> wx_, wy_; // affinity to the right / below neighbour
};

struct SmoothResult {
    DepthMap depth;
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;
};

/// Edge-aware weighted least squares smoothing of a depth map guided by the
/// all-in-focus image.
inline SmoothResult solve_edge_aware(const DepthMap& target, const Image& guide,
                                     const Image& conf, const SmoothConfig& cfg) {
    if (target.height != guide.height || target.width != guide.width)
        throw std::invalid_argument("solve_edge_aware: shape mismatch");
    EdgeAwareSystem sys(guide, conf, cfg);
    SmoothResult out;
    out.depth = DepthMap(target.height, target.width);
    out.depth.d_min = target.d_min;
    out.depth.d_max = target.d_max;
    auto st = sys.smooth(target.data, out.depth.data);
    out.iterations = st.iterations;
    out.residual = st.residual;
    out.converged = st.converged;
    return out;
}

/// Gradient of the smoothing output w.r.t. its target input, given an
/// upstream gradient on the output.
inline SmoothResult solve_edge_aware_grad(const Image& guide, const Image& conf,
                                          const SmoothConfig& cfg, const DepthMap& upstream) {
    EdgeAwareSystem sys(guide, conf, cfg);
    SmoothResult out;
    out.depth = DepthMap(upstream.height, upstream.width);
    auto st = sys.smooth_adjoint(upstream.data, out.depth.data);
    out.iterations = st.iterations;
    out.residual = st.residual;
    out.converged = st.converged;
    return out;
}

template <class T>
struct TvLoss {
    double loss = 0.0;
    T grad;
};

/// Anisotropic total variation with forward differences, summed over planes;
/// subgradient 0 at zero differences. Works on logits or PMFs (any tensor
/// with height/width/plane_count/at).
template <class Tensor>
inline TvLoss<Tensor> tv_loss(const Tensor& p) {
    TvLoss<Tensor> out;
    out.grad = Tensor(p.height, p.width, p.planes, 0.0);
    const int h = p.height, w = p.width, n = p.plane_count();
    double loss = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int j = 0; j < n; ++j) {
                double v = p.at(y, x, j);
                if (x + 1 < w) {
                    double d = p.at(y, x + 1, j) - v;
                    loss += std::abs(d);
                    double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    out.grad.at(y, x + 1, j) += s;
                    out.grad.at(y, x, j) -= s;
                }
                if (y + 1 < h) {
                    double d = p.at(y + 1, x, j) - v;
                    loss += std::abs(d);
                    double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    out.grad.at(y + 1, x, j) += s;
                    out.grad.at(y, x, j) -= s;
                }
            }
        }
    }
    out.loss = loss;
    return out;
}

} // namespace defocus
