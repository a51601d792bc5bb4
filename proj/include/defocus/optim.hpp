#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "defocus/comprender.hpp"
#include "defocus/lfrender.hpp"
#include "defocus/smooth.hpp"

namespace defocus {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
};

/// Standard Adam update with bias correction.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.t = 0;
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct L1Loss {
    double loss = 0.0;
    Image grad;
};

/// Mean absolute error over pixels and channels; sign subgradient, 0 at ties.
inline L1Loss l1_image_loss(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("l1_image_loss: shape mismatch");
    L1Loss out;
    out.grad = Image(a.height, a.width, a.channels, 0.0);
    const double n = static_cast<double>(a.data.size());
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += std::abs(d);
        out.grad.data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    out.loss = acc / n;
    return out;
}

// ---------------------------------------------------------------------------
// Supervision
// ---------------------------------------------------------------------------

struct SupervisionTarget {
    Image sdof;          // ground-truth shallow depth-of-field image
    ApertureMask aperture;
};

struct SupervisionSet {
    Image image; // all-in-focus input
    std::vector<SupervisionTarget> targets;

    void validate() const {
        if (targets.empty())
            throw std::invalid_argument("SupervisionSet: needs at least one target");
        for (const auto& t : targets)
            if (!t.sdof.same_shape(image))
                throw std::invalid_argument("SupervisionSet: target shape mismatch");
    }
};

struct OptimConfig {
    int steps = 1000;
    double lr_depth = 3e-2;
    double lr_logits = 3e-2;
    double lr_focus = 1e-2;
    double lambda_d = 0.1;
    double lambda_tv = 1e-10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double d_lo = -15.0;
    double d_hi = 15.0;
    int expansion_iters = 3;
    bool smooth_in_loop = true;
    SmoothConfig smooth;
    DepthPlanes planes;              // compositional path
    std::vector<double> focus_init;  // per-target d-hat start (default: zeros)

    AdamConfig depth_adam() const { return {lr_depth, beta1, beta2, eps}; }
    AdamConfig logits_adam() const { return {lr_logits, beta1, beta2, eps}; }
    AdamConfig focus_adam() const { return {lr_focus, beta1, beta2, eps}; }
};

struct LossTraceRow {
    int step = 0;
    double total = 0.0;
    double data = 0.0;
    double reg = 0.0;
    std::vector<double> focus;
};

using LossTrace = std::vector<LossTraceRow>;

inline void write_loss_trace(const std::string& path, const LossTrace& trace) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_loss_trace: cannot open " + path);
    f << "step,total,data,reg";
    if (!trace.empty())
        for (size_t i = 0; i < trace.front().focus.size(); ++i) f << ",dhat" << i;
    f << "\n";
    f.precision(12);
    for (const auto& row : trace) {
        f << row.step << "," << row.total << "," << row.data << "," << row.reg;
        for (double d : row.focus) f << "," << d;
        f << "\n";
    }
}

namespace detail {

// Bounded depth parameterization Z = d_lo + (d_hi - d_lo) (tanh(theta)+1)/2.
inline double bound_depth(double theta, double lo, double hi) {
    return lo + (hi - lo) * 0.5 * (std::tanh(theta) + 1.0);
}

inline double bound_depth_deriv(double theta, double lo, double hi) {
    double t = std::tanh(theta);
    return (hi - lo) * 0.5 * (1.0 - t * t);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Light-field pipeline: direct minimization over per-pixel depth and the
// per-target focus distances.
// ---------------------------------------------------------------------------

struct LfOptimResult {
    DepthMap depth;            // final smoothed depth
    std::vector<double> focus; // recovered d-hat per target
    LossTrace trace;
};

inline LfOptimResult optimize_depth_lf(const SupervisionSet& sup, const OptimConfig& cfg) {
    sup.validate();
    const int h = sup.image.height, w = sup.image.width;
    const size_t npx = static_cast<size_t>(h) * w;
    const int ntargets = static_cast<int>(sup.targets.size());

    Image conf = confidence_from_image(sup.image);
    EdgeAwareSystem smoother(sup.image, conf, cfg.smooth);

    std::vector<double> theta(npx, 0.0);
    std::vector<double> focus(static_cast<size_t>(ntargets), 0.0);
    for (size_t i = 0; i < cfg.focus_init.size() && i < focus.size(); ++i)
        focus[i] = cfg.focus_init[i];
    AdamState theta_state, focus_state;

    // Targets sharing an aperture grid share one depth expansion per step.
    std::map<int, std::vector<int>> by_grid;
    for (int i = 0; i < ntargets; ++i)
        by_grid[sup.targets[static_cast<size_t>(i)].aperture.grid_size].push_back(i);

    LfOptimResult out;
    out.trace.reserve(static_cast<size_t>(cfg.steps));

    DepthMap z(h, w);
    z.d_min = cfg.d_lo;
    z.d_max = cfg.d_hi;

    auto bound_all = [&](DepthMap& zt) {
        for (size_t i = 0; i < npx; ++i)
            zt.data[i] = detail::bound_depth(theta[i], cfg.d_lo, cfg.d_hi);
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        bound_all(z);
        DepthMap zs = z;
        if (cfg.smooth_in_loop) {
            std::vector<double> smoothed;
            smoother.smooth(z.data, smoothed);
            zs.data = std::move(smoothed);
        }

        std::vector<double> dzs(npx, 0.0);
        std::vector<double> dfocus(static_cast<size_t>(ntargets), 0.0);
        double data_loss = 0.0, reg_loss = 0.0;

        for (const auto& [grid, idxs] : by_grid) {
            const ApertureMask& ap =
                sup.targets[static_cast<size_t>(idxs.front())].aperture;
            ExpandTrace trace;
            ViewDepthStack stack = expand_depth_traced(zs, ap, cfg.expansion_iters, &trace);
            ViewDepthStack dstack(h, w, grid, 0.0);

            for (int i : idxs) {
                const auto& target = sup.targets[static_cast<size_t>(i)];
                Image rendered = render_from_stack(sup.image, stack, ap, focus[static_cast<size_t>(i)]);
                L1Loss l1 = l1_image_loss(rendered, target.sdof);
                data_loss += l1.loss;
                StackRenderGrad rg = render_from_stack_backward(
                    sup.image, stack, ap, focus[static_cast<size_t>(i)], l1.grad);
                dfocus[static_cast<size_t>(i)] = rg.d_focus;
                for (size_t k = 0; k < dstack.data.size(); ++k)
                    dstack.data[k] += rg.d_depth.data[k];
            }

            if (cfg.lambda_d != 0.0) {
                RayDepthLoss rd = ray_depth_loss(stack, zs);
                // One L_d term per supervision tuple sharing this aperture.
                double scale = cfg.lambda_d * static_cast<double>(idxs.size());
                reg_loss += scale * rd.loss;
                for (size_t k = 0; k < dstack.data.size(); ++k)
                    dstack.data[k] += scale * rd.d_stack.data[k];
            }

            DepthMap dz_part = expand_depth_backward(zs, ap, trace, dstack);
            for (size_t k = 0; k < npx; ++k) dzs[k] += dz_part.data[k];
        }

        double total = data_loss + reg_loss;
        if (!std::isfinite(total))
            throw std::runtime_error("optimize_depth_lf: non-finite loss at step " +
                                     std::to_string(step));
        out.trace.push_back({step, total, data_loss, reg_loss, focus});

        std::vector<double> dtheta(npx);
        if (cfg.smooth_in_loop) {
            DepthMap up(h, w);
            up.data = dzs;
            std::vector<double> dz_target;
            smoother.smooth_adjoint(up.data, dz_target);
            for (size_t i = 0; i < npx; ++i)
                dtheta[i] = dz_target[i] * detail::bound_depth_deriv(theta[i], cfg.d_lo, cfg.d_hi);
        } else {
            for (size_t i = 0; i < npx; ++i)
                dtheta[i] = dzs[i] * detail::bound_depth_deriv(theta[i], cfg.d_lo, cfg.d_hi);
        }

        adam_step(theta, dtheta, theta_state, cfg.depth_adam());
        adam_step(focus, dfocus, focus_state, cfg.focus_adam());
    }

    bound_all(z);
    std::vector<double> smoothed;
    smoother.smooth(z.data, smoothed);
    out.depth = std::move(z);
    out.depth.data = std::move(smoothed);
    out.focus = focus;
    return out;
}

// ---------------------------------------------------------------------------
// Compositional pipeline: direct minimization over per-pixel depth logits
// and the per-target focus distances.
// ---------------------------------------------------------------------------

struct CompOptimResult {
    DepthLogits logits;
    DepthMap depth;            // argmax disparity of the final PMF
    std::vector<double> focus;
    LossTrace trace;
};

inline CompOptimResult optimize_depth_comp(const SupervisionSet& sup, const OptimConfig& cfg) {
    sup.validate();
    const int h = sup.image.height, w = sup.image.width;
    const int ntargets = static_cast<int>(sup.targets.size());

    std::vector<Image> stack = blur_stack(sup.image, cfg.planes);
    DepthLogits logits(h, w, cfg.planes, 0.0);
    std::vector<double> focus(static_cast<size_t>(ntargets), 0.0);
    for (size_t i = 0; i < cfg.focus_init.size() && i < focus.size(); ++i)
        focus[i] = cfg.focus_init[i];
    AdamState logits_state, focus_state;

    CompOptimResult out;
    out.trace.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 1; step <= cfg.steps; ++step) {
        DepthPMF p = softmax_pmf(logits);
        DepthPMF dp(h, w, cfg.planes, 0.0);
        std::vector<double> dfocus(static_cast<size_t>(ntargets), 0.0);
        double data_loss = 0.0, reg_loss = 0.0;

        for (int i = 0; i < ntargets; ++i) {
            const auto& target = sup.targets[static_cast<size_t>(i)];
            Image rendered = render_from_pmf(stack, p, focus[static_cast<size_t>(i)]);
            L1Loss l1 = l1_image_loss(rendered, target.sdof);
            data_loss += l1.loss;

            const int n = cfg.planes.count();
            DepthPMF dq(h, w, cfg.planes, 0.0);
            parallel_for(static_cast<std::int64_t>(h) * w, [&](std::int64_t px) {
                double* o = dq.data.data() + px * n;
                const double* up = l1.grad.data.data() + px * sup.image.channels;
                for (int j = 0; j < n; ++j) {
                    const double* b = stack[static_cast<size_t>(j)].data.data() +
                                      px * sup.image.channels;
                    double acc = 0.0;
                    for (int c = 0; c < sup.image.channels; ++c) acc += up[c] * b[c];
                    o[j] = acc;
                }
            });
            dfocus[static_cast<size_t>(i)] =
                shift_pmf_dfocus(p, dq, focus[static_cast<size_t>(i)]);
            DepthPMF dpi = shift_pmf_backward(dq, focus[static_cast<size_t>(i)]);
            for (size_t k = 0; k < dp.data.size(); ++k) dp.data[k] += dpi.data[k];
        }

        if (cfg.lambda_tv != 0.0) {
            auto tv = tv_loss(p);
            reg_loss += cfg.lambda_tv * tv.loss;
            for (size_t k = 0; k < dp.data.size(); ++k)
                dp.data[k] += cfg.lambda_tv * tv.grad.data[k];
        }

        double total = data_loss + reg_loss;
        if (!std::isfinite(total))
            throw std::runtime_error("optimize_depth_comp: non-finite loss at step " +
                                     std::to_string(step));
        out.trace.push_back({step, total, data_loss, reg_loss, focus});

        DepthLogits dlogits = softmax_backward(p, dp);
        adam_step(logits.data, dlogits.data, logits_state, cfg.logits_adam());
        adam_step(focus, dfocus, focus_state, cfg.focus_adam());
    }

    out.depth = pmf_to_depth(softmax_pmf(logits));
    out.logits = std::move(logits);
    out.focus = focus;
    return out;
}

} // namespace defocus
