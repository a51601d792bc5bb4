#pragma once

#include <stdexcept>
#include <vector>

#include "defocus/image.hpp"

namespace defocus {

/// Ray radiance L(x, u): m x m views of H x W x C pixels, view-major layout.
/// The central view (odd m) equals the source all-in-focus image.
struct LightField {
    int height = 0;
    int width = 0;
    int grid_size = 0;
    int channels = 0;
    std::vector<double> data;

    LightField() = default;
    LightField(int h, int w, int m, int c)
        : height(h), width(w), grid_size(m), channels(c),
          data(static_cast<size_t>(h) * w * m * m * c, 0.0) {
        if (h < 1 || w < 1 || m < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("LightField: bad dimensions");
    }

    size_t view_offset(int v) const {
        return static_cast<size_t>(v) * height * width * channels;
    }
    double& at(int y, int x, int v, int c) {
        return data[view_offset(v) + (static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int v, int c) const {
        return data[view_offset(v) + (static_cast<size_t>(y) * width + x) * channels + c];
    }
    const double* view(int v) const { return data.data() + view_offset(v); }
    double* view(int v) { return data.data() + view_offset(v); }

    /// Copies one view out as an Image.
    Image view_image(int v) const {
        Image img(height, width, channels);
        const double* src = view(v);
        std::copy(src, src + img.size(), img.data.begin());
        return img;
    }
};

/// Per-view depth maps D(x, u), same view-major layout with one plane per
/// view. The central plane (odd m) equals the source depth map.
struct ViewDepthStack {
    int height = 0;
    int width = 0;
    int grid_size = 0;
    double d_min = -15.0;
    double d_max = 15.0;
    std::vector<double> data;

    ViewDepthStack() = default;
    ViewDepthStack(int h, int w, int m, double fill = 0.0)
        : height(h), width(w), grid_size(m),
          data(static_cast<size_t>(h) * w * m * m, fill) {
        if (h < 1 || w < 1 || m < 1)
            throw std::invalid_argument("ViewDepthStack: bad dimensions");
    }

    size_t view_offset(int v) const { return static_cast<size_t>(v) * height * width; }
    double& at(int y, int x, int v) {
        return data[view_offset(v) + static_cast<size_t>(y) * width + x];
    }
    double at(int y, int x, int v) const {
        return data[view_offset(v) + static_cast<size_t>(y) * width + x];
    }
    const double* view(int v) const { return data.data() + view_offset(v); }
    double* view(int v) { return data.data() + view_offset(v); }

    double sample_view(int v, double y, double x) const {
        const double* p = view(v);
        return detail::bilinear(height, width, y, x,
                                [&](int iy, int ix) { return p[static_cast<size_t>(iy) * width + ix]; });
    }
};

} // namespace defocus
