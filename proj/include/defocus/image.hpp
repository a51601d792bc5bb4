#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "defocus/common.hpp"

namespace defocus {

/// H x W x C raster, row-major with interleaved channels. Values are
/// nominally in [0,1] for file-loaded images; intermediates may exceed that.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {
        if (h < 1 || w < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("Image: bad dimensions");
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Per-pixel disparity field in pixels of image shift per unit aperture
/// coordinate. Values live in [d_min, d_max].
struct DepthMap {
    int height = 0;
    int width = 0;
    double d_min = -15.0;
    double d_max = 15.0;
    std::vector<double> data;

    DepthMap() = default;
    DepthMap(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw std::invalid_argument("DepthMap: bad dimensions");
    }

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

namespace detail {

// Resolves a continuous coordinate to a cell origin and fractional offset
// with clamp-to-edge semantics. "inside" is false when the raw coordinate
// fell outside [0, n-1]; the sampled value is then the clamped border value
// and the derivative w.r.t. the coordinate is zero.
struct CellCoord {
    int i0 = 0;
    double frac = 0.0;
    bool inside = true;
};

inline CellCoord resolve_cell(double t, int n) {
    CellCoord c;
    if (!(t >= 0.0)) { // catches negatives
        c.i0 = 0;
        c.frac = 0.0;
        c.inside = false;
        return c;
    }
    if (t >= n - 1) {
        c.i0 = n >= 2 ? n - 2 : 0;
        c.frac = n >= 2 ? 1.0 : 0.0;
        c.inside = (t == static_cast<double>(n - 1));
        return c;
    }
    c.i0 = static_cast<int>(t);
    c.frac = t - c.i0;
    return c;
}

// Bilinear interpolation over a plane accessed through fetch(y, x). The
// four-weight form degenerates exactly to a pixel read on lattice points.
template <class F>
inline double bilinear(int h, int w, double y, double x, F&& fetch) {
    CellCoord cy = resolve_cell(y, h);
    CellCoord cx = resolve_cell(x, w);
    int y1 = h >= 2 ? cy.i0 + 1 : cy.i0;
    int x1 = w >= 2 ? cx.i0 + 1 : cx.i0;
    return (1 - cy.frac) * (1 - cx.frac) * fetch(cy.i0, cx.i0) +
           (1 - cy.frac) * cx.frac * fetch(cy.i0, x1) +
           cy.frac * (1 - cx.frac) * fetch(y1, cx.i0) +
           cy.frac * cx.frac * fetch(y1, x1);
}

struct BilinearSample {
    double value = 0.0;
    double dy = 0.0;
    double dx = 0.0;
};

// Value plus partial derivatives w.r.t. the lookup coordinates. The
// derivative is piecewise constant per cell; integer coordinates use the
// cell to the right/below, and clamped coordinates get zero derivative.
template <class F>
inline BilinearSample bilinear_grad(int h, int w, double y, double x, F&& fetch) {
    CellCoord cy = resolve_cell(y, h);
    CellCoord cx = resolve_cell(x, w);
    // One-sided convention: at an interior lattice line use the next cell.
    if (cy.inside && cy.frac == 1.0 && cy.i0 + 2 <= h - 1) { cy.i0 += 1; cy.frac = 0.0; }
    if (cx.inside && cx.frac == 1.0 && cx.i0 + 2 <= w - 1) { cx.i0 += 1; cx.frac = 0.0; }
    int y1 = h >= 2 ? cy.i0 + 1 : cy.i0;
    int x1 = w >= 2 ? cx.i0 + 1 : cx.i0;
    double v00 = fetch(cy.i0, cx.i0);
    double v01 = fetch(cy.i0, x1);
    double v10 = fetch(y1, cx.i0);
    double v11 = fetch(y1, x1);
    BilinearSample s;
    s.value = (1 - cy.frac) * (1 - cx.frac) * v00 + (1 - cy.frac) * cx.frac * v01 +
              cy.frac * (1 - cx.frac) * v10 + cy.frac * cx.frac * v11;
    if (cy.inside && h >= 2)
        s.dy = (1 - cx.frac) * (v10 - v00) + cx.frac * (v11 - v01);
    if (cx.inside && w >= 2)
        s.dx = (1 - cy.frac) * (v01 - v00) + cy.frac * (v11 - v10);
    return s;
}

// Corner indices and weights of a clamped bilinear lookup, for scatter-style
// adjoints: d value / d plane(iy[k], ix[k]) = wgt[k].
struct BilinearFootprint {
    int iy[4];
    int ix[4];
    double wgt[4];
};

inline BilinearFootprint footprint(int h, int w, double y, double x) {
    CellCoord cy = resolve_cell(y, h);
    CellCoord cx = resolve_cell(x, w);
    int y1 = h >= 2 ? cy.i0 + 1 : cy.i0;
    int x1 = w >= 2 ? cx.i0 + 1 : cx.i0;
    BilinearFootprint f;
    f.iy[0] = cy.i0; f.ix[0] = cx.i0; f.wgt[0] = (1 - cy.frac) * (1 - cx.frac);
    f.iy[1] = cy.i0; f.ix[1] = x1;    f.wgt[1] = (1 - cy.frac) * cx.frac;
    f.iy[2] = y1;    f.ix[2] = cx.i0; f.wgt[2] = cy.frac * (1 - cx.frac);
    f.iy[3] = y1;    f.ix[3] = x1;    f.wgt[3] = cy.frac * cx.frac;
    return f;
}

} // namespace detail

/// Bilinear lookup of channel c at continuous position (y, x), clamp-to-edge.
inline double sample_bilinear(const Image& img, double y, double x, int c) {
    return detail::bilinear(img.height, img.width, y, x,
                            [&](int iy, int ix) { return img.at(iy, ix, c); });
}

inline double sample_bilinear(const DepthMap& z, double y, double x) {
    return detail::bilinear(z.height, z.width, y, x,
                            [&](int iy, int ix) { return z.at(iy, ix); });
}

struct Grad2 {
    double dy = 0.0;
    double dx = 0.0;
};

/// Partial derivatives of the bilinear interpolant w.r.t. the lookup
/// coordinates. Piecewise constant; zero outside the clamp range.
inline Grad2 sample_bilinear_grad(const Image& img, double y, double x, int c) {
    auto s = detail::bilinear_grad(img.height, img.width, y, x,
                                   [&](int iy, int ix) { return img.at(iy, ix, c); });
    return {s.dy, s.dx};
}

inline Grad2 sample_bilinear_grad(const DepthMap& z, double y, double x) {
    auto s = detail::bilinear_grad(z.height, z.width, y, x,
                                   [&](int iy, int ix) { return z.at(iy, ix); });
    return {s.dy, s.dx};
}

} // namespace defocus
