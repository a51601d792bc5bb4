#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "defocus/aperture.hpp"
#include "defocus/image.hpp"
#include "defocus/lightfield.hpp"

namespace defocus {

struct LfRenderConfig {
    ApertureMask aperture;
    double focus = 0.0;      // d-hat, in disparity units
    int expansion_iters = 3; // fixed-point refinement count K
};

/// Intermediate depth stacks D^(0..K-1) kept from the forward expansion so
/// the backward pass can replay sample positions. iterates[0] is Z broadcast
/// to every view.
struct ExpandTrace {
    std::vector<ViewDepthStack> iterates;
};

namespace detail {

inline ViewDepthStack broadcast_depth(const DepthMap& z, int m) {
    ViewDepthStack d(z.height, z.width, m);
    d.d_min = z.d_min;
    d.d_max = z.d_max;
    for (int v = 0; v < m * m; ++v)
        std::copy(z.data.begin(), z.data.end(), d.view(v));
    return d;
}

} // namespace detail

/// Expands a central-view depth map into a per-view depth stack by K
/// iterations of D^k(x,u) = Z(x + u D^(k-1)(x,u)), then clamps to the depth
/// range. The central view stays equal to Z.
inline ViewDepthStack expand_depth_traced(const DepthMap& z, const ApertureMask& ap,
                                          int iters, ExpandTrace* trace = nullptr) {
    if (iters < 1) throw std::invalid_argument("expand_depth: iters must be >= 1");
    const int m = ap.grid_size;
    const int h = z.height, w = z.width;
    ViewDepthStack cur = detail::broadcast_depth(z, m);
    if (trace) {
        trace->iterates.clear();
        trace->iterates.reserve(static_cast<size_t>(iters));
    }
    for (int k = 0; k < iters; ++k) {
        if (trace) trace->iterates.push_back(cur);
        ViewDepthStack next(h, w, m);
        next.d_min = z.d_min;
        next.d_max = z.d_max;
        parallel_for(static_cast<std::int64_t>(m) * m, [&](std::int64_t vi) {
            int v = static_cast<int>(vi);
            const Vec2& u = ap.coord(v);
            const double* src = cur.view(v);
            double* dst = next.view(v);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double d0 = src[static_cast<size_t>(y) * w + x];
                    dst[static_cast<size_t>(y) * w + x] =
                        sample_bilinear(z, y + u.y * d0, x + u.x * d0);
                }
            }
        });
        cur = std::move(next);
    }
    // Samples of Z are convex combinations of in-range values; the clamp only
    // guards the invariant.
    for (double& d : cur.data) d = std::clamp(d, z.d_min, z.d_max);
    return cur;
}

inline ViewDepthStack expand_depth(const DepthMap& z, const ApertureMask& ap, int iters) {
    return expand_depth_traced(z, ap, iters, nullptr);
}

/// Adjoint of expand_depth: chains an upstream stack gradient back to the
/// central depth map through all K lookup iterations.
inline DepthMap expand_depth_backward(const DepthMap& z, const ApertureMask& ap,
                                      const ExpandTrace& trace,
                                      const ViewDepthStack& upstream) {
    const int m = ap.grid_size;
    const int h = z.height, w = z.width;
    const int iters = static_cast<int>(trace.iterates.size());
    const size_t plane = static_cast<size_t>(h) * w;
    DepthMap dz(h, w, 0.0);
    dz.d_min = z.d_min;
    dz.d_max = z.d_max;

    const int views = m * m;
    std::vector<std::vector<double>> partial(static_cast<size_t>(chunk_count(views)));
    int chunks = parallel_chunks(views, [&](int c, std::int64_t vb, std::int64_t ve) {
        std::vector<double> acc(plane, 0.0);
        std::vector<double> g(plane), gprev(plane);
        for (std::int64_t vi = vb; vi < ve; ++vi) {
            int v = static_cast<int>(vi);
            const Vec2& u = ap.coord(v);
            const double* up = upstream.view(v);
            std::copy(up, up + plane, g.begin());
            for (int k = iters - 1; k >= 0; --k) {
                const double* prev = trace.iterates[static_cast<size_t>(k)].view(v);
                std::fill(gprev.begin(), gprev.end(), 0.0);
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        size_t i = static_cast<size_t>(y) * w + x;
                        double gi = g[i];
                        if (gi == 0.0) continue;
                        double py = y + u.y * prev[i];
                        double px = x + u.x * prev[i];
                        auto f = detail::footprint(h, w, py, px);
                        for (int t = 0; t < 4; ++t)
                            acc[static_cast<size_t>(f.iy[t]) * w + f.ix[t]] += gi * f.wgt[t];
                        auto s = detail::bilinear_grad(
                            h, w, py, px, [&](int iy, int ix) { return z.at(iy, ix); });
                        gprev[i] = gi * (s.dy * u.y + s.dx * u.x);
                    }
                }
                std::swap(g, gprev);
            }
            // D^(0)(x,u) = Z(x) contributes directly.
            for (size_t i = 0; i < plane; ++i) acc[i] += g[i];
        }
        partial[static_cast<size_t>(c)] = std::move(acc);
    });
    for (int c = 0; c < chunks; ++c)
        for (size_t i = 0; i < plane; ++i) dz.data[i] += partial[static_cast<size_t>(c)][i];
    return dz;
}

/// Backward-warps the all-in-focus image into every view of the stack's
/// grid: L(x,u) = I(x + u D(x,u)). The central view copies I exactly.
inline LightField warp_to_views(const Image& img, const ViewDepthStack& depth) {
    if (img.height != depth.height || img.width != depth.width)
        throw std::invalid_argument("warp_to_views: shape mismatch");
    const int m = depth.grid_size;
    const int h = img.height, w = img.width, ch = img.channels;
    ApertureMask grid = make_aperture(m);
    LightField lf(h, w, m, ch);
    parallel_for(static_cast<std::int64_t>(m) * m, [&](std::int64_t vi) {
        int v = static_cast<int>(vi);
        const Vec2& u = grid.coord(v);
        const double* dview = depth.view(v);
        double* out = lf.view(v);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                double d = dview[i];
                double sy = y + u.y * d;
                double sx = x + u.x * d;
                auto f = detail::footprint(h, w, sy, sx);
                for (int c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (int t = 0; t < 4; ++t)
                        acc += f.wgt[t] * img.at(f.iy[t], f.ix[t], c);
                    out[i * ch + c] = acc;
                }
            }
        }
    });
    return lf;
}

/// Shears each view raster by -u*focus, weights by the aperture mask, and
/// averages: the refocused photograph of a stored light field.
inline Image integrate_aperture(const LightField& lf, const ApertureMask& ap, double focus) {
    if (lf.grid_size != ap.grid_size)
        throw std::invalid_argument("integrate_aperture: aperture grid mismatch");
    const int h = lf.height, w = lf.width, ch = lf.channels;
    const int views = ap.view_count();
    Image out(h, w, ch, 0.0);
    parallel_for(static_cast<std::int64_t>(h), [&](std::int64_t y) {
        for (int v = 0; v < views; ++v) {
            double wv = ap.weight(v);
            if (wv == 0.0) continue;
            wv /= ap.weight_sum;
            const Vec2& u = ap.coord(v);
            const double* lv = lf.view(v);
            double sy = static_cast<double>(y) - u.y * focus;
            for (int x = 0; x < w; ++x) {
                double sx = x - u.x * focus;
                auto f = detail::footprint(h, w, sy, sx);
                for (int c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (int t = 0; t < 4; ++t)
                        acc += f.wgt[t] *
                               lv[(static_cast<size_t>(f.iy[t]) * w + f.ix[t]) * ch + c];
                    out.at(static_cast<int>(y), x, c) += wv * acc;
                }
            }
        }
    });
    return out;
}

/// Renders the shallow depth-of-field image from an expanded depth stack by
/// evaluating the composed warp-and-shear coordinates with one bilinear
/// lookup per ray: out(x) = sum_u A(u) I(p + u D(p,u)), p = x - u*focus.
/// Keeping the composition continuous makes the in-focus identity exact.
inline Image render_from_stack(const Image& img, const ViewDepthStack& depth,
                               const ApertureMask& ap, double focus) {
    if (img.height != depth.height || img.width != depth.width)
        throw std::invalid_argument("render_from_stack: shape mismatch");
    if (depth.grid_size != ap.grid_size)
        throw std::invalid_argument("render_from_stack: aperture grid mismatch");
    const int h = img.height, w = img.width, ch = img.channels;
    const int views = ap.view_count();
    Image out(h, w, ch, 0.0);
    parallel_for(static_cast<std::int64_t>(h), [&](std::int64_t y) {
        for (int v = 0; v < views; ++v) {
            double wv = ap.weight(v);
            if (wv == 0.0) continue;
            wv /= ap.weight_sum;
            const Vec2& u = ap.coord(v);
            const double* dview = depth.view(v);
            double py = static_cast<double>(y) - u.y * focus;
            for (int x = 0; x < w; ++x) {
                double px = x - u.x * focus;
                double d = detail::bilinear(h, w, py, px, [&](int iy, int ix) {
                    return dview[static_cast<size_t>(iy) * w + ix];
                });
                auto f = detail::footprint(h, w, py + u.y * d, px + u.x * d);
                for (int c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (int t = 0; t < 4; ++t)
                        acc += f.wgt[t] * img.at(f.iy[t], f.ix[t], c);
                    out.at(static_cast<int>(y), x, c) += wv * acc;
                }
            }
        }
    });
    return out;
}

struct StackRenderGrad {
    ViewDepthStack d_depth;
    double d_focus = 0.0;
};

/// Reverse-mode gradients of render_from_stack w.r.t. the depth stack and
/// the focus distance.
inline StackRenderGrad render_from_stack_backward(const Image& img, const ViewDepthStack& depth,
                                                  const ApertureMask& ap, double focus,
                                                  const Image& upstream) {
    if (!img.same_shape(upstream))
        throw std::invalid_argument("render_from_stack_backward: upstream shape mismatch");
    const int h = img.height, w = img.width, ch = img.channels;
    const int views = ap.view_count();
    StackRenderGrad grad;
    grad.d_depth = ViewDepthStack(h, w, ap.grid_size, 0.0);
    grad.d_depth.d_min = depth.d_min;
    grad.d_depth.d_max = depth.d_max;

    std::vector<double> focus_partial(static_cast<size_t>(chunk_count(views)), 0.0);
    int chunks = parallel_chunks(views, [&](int c, std::int64_t vb, std::int64_t ve) {
        double dfocus = 0.0;
        for (std::int64_t vi = vb; vi < ve; ++vi) {
            int v = static_cast<int>(vi);
            double wv = ap.weight(v);
            if (wv == 0.0) continue;
            wv /= ap.weight_sum;
            const Vec2& u = ap.coord(v);
            const double* dview = depth.view(v);
            double* gview = grad.d_depth.view(v);
            for (int y = 0; y < h; ++y) {
                double py = y - u.y * focus;
                for (int x = 0; x < w; ++x) {
                    double px = x - u.x * focus;
                    auto ds = detail::bilinear_grad(h, w, py, px, [&](int iy, int ix) {
                        return dview[static_cast<size_t>(iy) * w + ix];
                    });
                    double qy = py + u.y * ds.value;
                    double qx = px + u.x * ds.value;
                    double gqy = 0.0, gqx = 0.0;
                    for (int cc = 0; cc < ch; ++cc) {
                        double g = wv * upstream.at(y, x, cc);
                        if (g == 0.0) continue;
                        auto is = detail::bilinear_grad(h, w, qy, qx, [&](int iy, int ix) {
                            return img.at(iy, ix, cc);
                        });
                        gqy += g * is.dy;
                        gqx += g * is.dx;
                    }
                    if (gqy == 0.0 && gqx == 0.0) continue;
                    double gd = gqy * u.y + gqx * u.x; // q = p + u*D
                    auto f = detail::footprint(h, w, py, px);
                    for (int t = 0; t < 4; ++t)
                        gview[static_cast<size_t>(f.iy[t]) * w + f.ix[t]] += gd * f.wgt[t];
                    double gpy = gqy + gd * ds.dy;
                    double gpx = gqx + gd * ds.dx;
                    dfocus -= gpy * u.y + gpx * u.x; // p = x - u*focus
                }
            }
        }
        focus_partial[static_cast<size_t>(c)] = dfocus;
    });
    for (int c = 0; c < chunks; ++c) grad.d_focus += focus_partial[static_cast<size_t>(c)];
    return grad;
}

/// Full light-field aperture rendering: depth expansion, warp, and
/// aperture integration composed.
inline Image render_light_field(const Image& img, const DepthMap& z, const LfRenderConfig& cfg) {
    if (img.height != z.height || img.width != z.width)
        throw std::invalid_argument("render_light_field: shape mismatch");
    ViewDepthStack d = expand_depth(z, cfg.aperture, cfg.expansion_iters);
    return render_from_stack(img, d, cfg.aperture, cfg.focus);
}

struct LfRenderGrad {
    DepthMap d_depth;
    double d_focus = 0.0;
};

/// Reverse-mode gradients of render_light_field w.r.t. the depth map and the
/// focus distance. Clamps pass zero gradient outside their active range.
inline LfRenderGrad render_light_field_grad(const Image& img, const DepthMap& z,
                                            const LfRenderConfig& cfg, const Image& upstream) {
    ExpandTrace trace;
    ViewDepthStack d = expand_depth_traced(z, cfg.aperture, cfg.expansion_iters, &trace);
    StackRenderGrad sg = render_from_stack_backward(img, d, cfg.aperture, cfg.focus, upstream);
    LfRenderGrad out;
    out.d_focus = sg.d_focus;
    out.d_depth = expand_depth_backward(z, cfg.aperture, trace, sg.d_depth);
    return out;
}

struct RayDepthLoss {
    double loss = 0.0;
    ViewDepthStack d_stack;
};

/// Mean absolute deviation between a per-view depth stack and the one-step
/// warped target Z(x + u Z(x)). The target is treated as constant; the
/// subgradient w.r.t. the stack is sign/N with 0 at ties.
inline RayDepthLoss ray_depth_loss(const ViewDepthStack& d, const DepthMap& z) {
    if (d.height != z.height || d.width != z.width)
        throw std::invalid_argument("ray_depth_loss: shape mismatch");
    const int m = d.grid_size;
    const int h = z.height, w = z.width;
    ApertureMask grid = make_aperture(m);
    RayDepthLoss out;
    out.d_stack = ViewDepthStack(h, w, m, 0.0);
    const double n = static_cast<double>(h) * w * m * m;
    out.loss = parallel_sum(static_cast<std::int64_t>(m) * m, [&](std::int64_t vi) {
        int v = static_cast<int>(vi);
        const Vec2& u = grid.coord(v);
        const double* dv = d.view(v);
        double* gv = out.d_stack.view(v);
        double acc = 0.0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                double zc = z.at(y, x);
                double target = sample_bilinear(z, y + u.y * zc, x + u.x * zc);
                double diff = dv[i] - target;
                acc += std::abs(diff);
                gv[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / n;
            }
        }
        return acc;
    }) / n;
    return out;
}

} // namespace defocus
