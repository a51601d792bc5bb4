#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "defocus/image.hpp"

namespace defocus {

/// Discrete disparity planes, integer spaced, spanning [d_min, d_max] and
/// containing 0.
struct DepthPlanes {
    int d_min = -15;
    int d_max = 15;

    DepthPlanes() = default;
    DepthPlanes(int lo, int hi) : d_min(lo), d_max(hi) {
        if (lo > 0 || hi < 0 || lo >= hi)
            throw std::invalid_argument("DepthPlanes: range must be increasing and contain 0");
    }

    int count() const { return d_max - d_min + 1; }
    double disparity(int j) const { return d_min + j; }
    int index_of_zero() const { return -d_min; }
    double span() const { return static_cast<double>(d_max - d_min); }
};

/// One normalized disk kernel: indicator of x1^2 + x2^2 <= d^2 on integer
/// offsets, scaled to unit sum. d = 0 degenerates to a delta.
struct DiskKernel {
    int radius = 0;
    std::vector<double> taps; // (2*radius+1)^2, row-major

    double at(int dy, int dx) const {
        return taps[static_cast<size_t>(dy + radius) * (2 * radius + 1) + (dx + radius)];
    }
};

inline DiskKernel make_disk_kernel(double d) {
    DiskKernel k;
    k.radius = static_cast<int>(std::ceil(std::abs(d)));
    int side = 2 * k.radius + 1;
    k.taps.assign(static_cast<size_t>(side) * side, 0.0);
    double r2 = d * d;
    int count = 0;
    for (int dy = -k.radius; dy <= k.radius; ++dy)
        for (int dx = -k.radius; dx <= k.radius; ++dx)
            if (dy * dy + dx * dx <= r2) {
                k.taps[static_cast<size_t>(dy + k.radius) * side + (dx + k.radius)] = 1.0;
                ++count;
            }
    for (double& t : k.taps) t /= count;
    return k;
}

/// All plane kernels; kernels for d and -d are identical.
inline std::vector<DiskKernel> make_kernel_stack(const DepthPlanes& planes) {
    std::vector<DiskKernel> ks;
    ks.reserve(static_cast<size_t>(planes.count()));
    for (int j = 0; j < planes.count(); ++j)
        ks.push_back(make_disk_kernel(planes.disparity(j)));
    return ks;
}

/// The input image convolved with each plane's disk kernel, clamp-to-edge
/// padding. Depends only on the image, so callers can precompute it once
/// and render many times.
inline std::vector<Image> blur_stack(const Image& img, const DepthPlanes& planes) {
    auto kernels = make_kernel_stack(planes);
    const int h = img.height, w = img.width, ch = img.channels;
    std::vector<Image> out(static_cast<size_t>(planes.count()));
    for (int j = 0; j < planes.count(); ++j) {
        const DiskKernel& k = kernels[static_cast<size_t>(j)];
        Image& dst = out[static_cast<size_t>(j)];
        dst = Image(h, w, ch, 0.0);
        if (k.radius == 0) {
            dst.data = img.data;
            continue;
        }
        parallel_for(h, [&](std::int64_t y) {
            for (int x = 0; x < w; ++x) {
                for (int dy = -k.radius; dy <= k.radius; ++dy) {
                    int sy = std::clamp(static_cast<int>(y) + dy, 0, h - 1);
                    for (int dx = -k.radius; dx <= k.radius; ++dx) {
                        double t = k.at(dy, dx);
                        if (t == 0.0) continue;
                        int sx = std::clamp(x + dx, 0, w - 1);
                        for (int c = 0; c < ch; ++c)
                            dst.at(static_cast<int>(y), x, c) += t * img.at(sy, sx, c);
                    }
                }
            }
        });
    }
    return out;
}

/// Per-pixel logits over depth planes, pre-softmax.
struct DepthLogits {
    DepthPlanes planes;
    int height = 0;
    int width = 0;
    std::vector<double> data; // (y, x, j) with j fastest

    DepthLogits() = default;
    DepthLogits(int h, int w, DepthPlanes p = {}, double fill = 0.0)
        : planes(p), height(h), width(w),
          data(static_cast<size_t>(h) * w * p.count(), fill) {}

    int plane_count() const { return planes.count(); }
    double& at(int y, int x, int j) {
        return data[(static_cast<size_t>(y) * width + x) * planes.count() + j];
    }
    double at(int y, int x, int j) const {
        return data[(static_cast<size_t>(y) * width + x) * planes.count() + j];
    }
};

/// Per-pixel probability mass function over depth planes: non-negative,
/// summing to 1 at every pixel.
struct DepthPMF {
    DepthPlanes planes;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    DepthPMF() = default;
    DepthPMF(int h, int w, DepthPlanes p = {}, double fill = 0.0)
        : planes(p), height(h), width(w),
          data(static_cast<size_t>(h) * w * p.count(), fill) {}

    int plane_count() const { return planes.count(); }
    double& at(int y, int x, int j) {
        return data[(static_cast<size_t>(y) * width + x) * planes.count() + j];
    }
    double at(int y, int x, int j) const {
        return data[(static_cast<size_t>(y) * width + x) * planes.count() + j];
    }
};

/// Numerically stable per-pixel softmax.
inline DepthPMF softmax_pmf(const DepthLogits& logits) {
    DepthPMF p(logits.height, logits.width, logits.planes);
    const int n = logits.plane_count();
    const std::int64_t px = static_cast<std::int64_t>(logits.height) * logits.width;
    parallel_for(px, [&](std::int64_t i) {
        const double* in = logits.data.data() + i * n;
        double* out = p.data.data() + i * n;
        double mx = in[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        for (int j = 0; j < n; ++j) out[j] /= sum;
    });
    return p;
}

/// Adjoint of softmax_pmf: dlogit_i = p_i (g_i - sum_j g_j p_j).
inline DepthLogits softmax_backward(const DepthPMF& p, const DepthPMF& upstream) {
    DepthLogits g(p.height, p.width, p.planes);
    const int n = p.plane_count();
    const std::int64_t px = static_cast<std::int64_t>(p.height) * p.width;
    parallel_for(px, [&](std::int64_t i) {
        const double* pv = p.data.data() + i * n;
        const double* gv = upstream.data.data() + i * n;
        double* out = g.data.data() + i * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += pv[j] * gv[j];
        for (int j = 0; j < n; ++j) out[j] = pv[j] * (gv[j] - dot);
    });
    return g;
}

namespace detail {

// Mass at input plane j lands at continuous output position j - focus and
// splits linearly between the two neighbouring planes; positions past either
// end clamp onto the end plane. Shared by the forward shift, its adjoint,
// and the focus derivative.
struct ShiftTaps {
    int lo, hi;       // clamped destination indices
    double wlo, whi;  // split weights (sum to 1)
};

inline ShiftTaps shift_taps(int j, double focus, int n) {
    double t = j - focus;
    double fl = std::floor(t);
    ShiftTaps s;
    s.whi = t - fl;
    s.wlo = 1.0 - s.whi;
    int a = static_cast<int>(fl);
    s.lo = std::clamp(a, 0, n - 1);
    s.hi = std::clamp(a + 1, 0, n - 1);
    return s;
}

} // namespace detail

/// Shifts each pixel's PMF along the depth axis so the plane at disparity
/// `focus` maps onto the delta kernel plane. Mass is conserved.
inline DepthPMF shift_pmf(const DepthPMF& p, double focus) {
    if (std::abs(focus) > p.planes.span())
        throw std::invalid_argument("shift_pmf: focus outside representable shift range");
    const int n = p.plane_count();
    DepthPMF q(p.height, p.width, p.planes, 0.0);
    std::vector<detail::ShiftTaps> taps(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) taps[static_cast<size_t>(j)] = detail::shift_taps(j, focus, n);
    const std::int64_t px = static_cast<std::int64_t>(p.height) * p.width;
    parallel_for(px, [&](std::int64_t i) {
        const double* in = p.data.data() + i * n;
        double* out = q.data.data() + i * n;
        for (int j = 0; j < n; ++j) {
            const auto& t = taps[static_cast<size_t>(j)];
            out[t.lo] += t.wlo * in[j];
            out[t.hi] += t.whi * in[j];
        }
    });
    return q;
}

/// Adjoint of shift_pmf w.r.t. the input PMF.
inline DepthPMF shift_pmf_backward(const DepthPMF& upstream, double focus) {
    const int n = upstream.plane_count();
    DepthPMF g(upstream.height, upstream.width, upstream.planes, 0.0);
    std::vector<detail::ShiftTaps> taps(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) taps[static_cast<size_t>(j)] = detail::shift_taps(j, focus, n);
    const std::int64_t px = static_cast<std::int64_t>(upstream.height) * upstream.width;
    parallel_for(px, [&](std::int64_t i) {
        const double* up = upstream.data.data() + i * n;
        double* out = g.data.data() + i * n;
        for (int j = 0; j < n; ++j) {
            const auto& t = taps[static_cast<size_t>(j)];
            out[j] = t.wlo * up[t.lo] + t.whi * up[t.hi];
        }
    });
    return g;
}

/// Derivative of sum(upstream * shift_pmf(p, focus)) w.r.t. focus. Piecewise
/// linear in focus; zero where both split targets clamp to the same end.
inline double shift_pmf_dfocus(const DepthPMF& p, const DepthPMF& upstream, double focus) {
    const int n = p.plane_count();
    std::vector<detail::ShiftTaps> taps(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) taps[static_cast<size_t>(j)] = detail::shift_taps(j, focus, n);
    const std::int64_t px = static_cast<std::int64_t>(p.height) * p.width;
    return parallel_sum(px, [&](std::int64_t i) {
        const double* in = p.data.data() + i * n;
        const double* up = upstream.data.data() + i * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const auto& t = taps[static_cast<size_t>(j)];
            // d(wlo)/dfocus = +1, d(whi)/dfocus = -1.
            acc += in[j] * (up[t.lo] - up[t.hi]);
        }
        return acc;
    });
}

/// Blends precomputed blurred copies with a (pre-shifted-by-focus) PMF.
inline Image render_from_pmf(const std::vector<Image>& blurred, const DepthPMF& pmf,
                             double focus) {
    if (blurred.size() != static_cast<size_t>(pmf.plane_count()))
        throw std::invalid_argument("render_from_pmf: plane count mismatch");
    const Image& first = blurred.front();
    if (first.height != pmf.height || first.width != pmf.width)
        throw std::invalid_argument("render_from_pmf: shape mismatch");
    DepthPMF q = shift_pmf(pmf, focus);
    const int h = first.height, w = first.width, ch = first.channels;
    const int n = pmf.plane_count();
    Image out(h, w, ch, 0.0);
    parallel_for(static_cast<std::int64_t>(h) * w, [&](std::int64_t i) {
        const double* qv = q.data.data() + i * n;
        for (int j = 0; j < n; ++j) {
            double wj = qv[j];
            if (wj == 0.0) continue;
            const double* b = blurred[static_cast<size_t>(j)].data.data() + i * ch;
            double* o = out.data.data() + i * ch;
            for (int c = 0; c < ch; ++c) o[c] += wj * b[c];
        }
    });
    return out;
}

/// Compositional aperture rendering: softmax over logits, shift by focus,
/// blend disk-blurred copies of the input.
inline Image render_compositional(const Image& img, const DepthLogits& logits, double focus,
                                  const std::vector<Image>* precomputed_stack = nullptr) {
    if (img.height != logits.height || img.width != logits.width)
        throw std::invalid_argument("render_compositional: shape mismatch");
    DepthPMF p = softmax_pmf(logits);
    if (precomputed_stack) return render_from_pmf(*precomputed_stack, p, focus);
    return render_from_pmf(blur_stack(img, logits.planes), p, focus);
}

struct CompRenderGrad {
    DepthLogits d_logits;
    double d_focus = 0.0;
};

/// Reverse-mode gradients of render_compositional through blend, shift, and
/// softmax.
inline CompRenderGrad render_compositional_grad(const Image& img, const DepthLogits& logits,
                                                double focus, const Image& upstream,
                                                const std::vector<Image>* precomputed_stack = nullptr) {
    if (!img.same_shape(upstream))
        throw std::invalid_argument("render_compositional_grad: upstream shape mismatch");
    std::vector<Image> local;
    const std::vector<Image>* stack = precomputed_stack;
    if (!stack) {
        local = blur_stack(img, logits.planes);
        stack = &local;
    }
    DepthPMF p = softmax_pmf(logits);
    const int h = img.height, w = img.width, ch = img.channels;
    const int n = logits.plane_count();
    // dLoss/dQ(x,j) = sum_c upstream(x,c) * blurred_j(x,c)
    DepthPMF dq(h, w, logits.planes, 0.0);
    parallel_for(static_cast<std::int64_t>(h) * w, [&](std::int64_t i) {
        double* out = dq.data.data() + i * n;
        const double* up = upstream.data.data() + i * ch;
        for (int j = 0; j < n; ++j) {
            const double* b = (*stack)[static_cast<size_t>(j)].data.data() + i * ch;
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) acc += up[c] * b[c];
            out[j] = acc;
        }
    });
    CompRenderGrad grad;
    grad.d_focus = shift_pmf_dfocus(p, dq, focus);
    DepthPMF dp = shift_pmf_backward(dq, focus);
    grad.d_logits = softmax_backward(p, dp);
    return grad;
}

/// Per-pixel argmax plane disparity; ties break toward the plane nearer 0
/// (and toward the negative plane between equidistant pairs).
inline DepthMap pmf_to_depth(const DepthPMF& p) {
    DepthMap z(p.height, p.width, 0.0);
    z.d_min = p.planes.d_min;
    z.d_max = p.planes.d_max;
    const int n = p.plane_count();
    // Scan order 0, -1, +1, -2, +2, ... so the first strict maximum found is
    // the tie-break winner.
    std::vector<int> order;
    order.reserve(static_cast<size_t>(n));
    order.push_back(p.planes.index_of_zero());
    for (int r = 1; r < n; ++r) {
        int neg = p.planes.index_of_zero() - r;
        int pos = p.planes.index_of_zero() + r;
        if (neg >= 0) order.push_back(neg);
        if (pos < n) order.push_back(pos);
    }
    parallel_for(static_cast<std::int64_t>(p.height) * p.width, [&](std::int64_t i) {
        const double* pv = p.data.data() + i * n;
        int best = order[0];
        for (int oi = 1; oi < n; ++oi)
            if (pv[order[static_cast<size_t>(oi)]] > pv[best]) best = order[static_cast<size_t>(oi)];
        z.data[static_cast<size_t>(i)] = p.planes.disparity(best);
    });
    return z;
}

} // namespace defocus
