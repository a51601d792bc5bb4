#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "defocus/image.hpp"

namespace defocus {

inline double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

/// PSNR on [0,1] data, capped at 99 dB for MSE below 1e-10.
inline double psnr(const Image& a, const Image& b) {
    double m = mse(a, b);
    if (m < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / m);
}

/// Mean absolute difference of two depth maps.
inline double depth_mae(const DepthMap& a, const DepthMap& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("depth_mae: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

namespace detail {

inline std::vector<double> gaussian_taps(int radius, double sigma) {
    std::vector<double> t(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        t[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += t[static_cast<size_t>(i + radius)];
    }
    for (double& v : t) v /= sum;
    return t;
}

} // namespace detail

/// Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Channels are averaged; the map is evaluated
/// only where the full window fits.
inline double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kRadius = 5;
    if (a.height < 2 * kRadius + 1 || a.width < 2 * kRadius + 1)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const std::vector<double> g = detail::gaussian_taps(kRadius, 1.5);
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int h = a.height, w = a.width, ch = a.channels;

    double total = 0.0;
    std::int64_t count = 0;
    for (int c = 0; c < ch; ++c) {
        for (int y = kRadius; y < h - kRadius; ++y) {
            for (int x = kRadius; x < w - kRadius; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int dy = -kRadius; dy <= kRadius; ++dy) {
                    for (int dx = -kRadius; dx <= kRadius; ++dx) {
                        double wgt = g[static_cast<size_t>(dy + kRadius)] *
                                     g[static_cast<size_t>(dx + kRadius)];
                        double pa = a.at(y + dy, x + dx, c);
                        double pb = b.at(y + dy, x + dx, c);
                        ma += wgt * pa;
                        mb += wgt * pb;
                        va += wgt * pa * pa;
                        vb += wgt * pb * pb;
                        cov += wgt * pa * pb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

} // namespace defocus
