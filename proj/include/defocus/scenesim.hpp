#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "defocus/aperture.hpp"
#include "defocus/image.hpp"
#include "defocus/lightfield.hpp"

namespace defocus {

/// One fronto-parallel textured layer with a binary alpha mask.
struct SceneLayer {
    Image texture;
    std::vector<std::uint8_t> alpha; // H*W, 0 or 1
    double disparity = 0.0;

    bool opaque_at(int y, int x) const {
        return alpha[static_cast<size_t>(y) * texture.width + x] != 0;
    }
};

/// Ordered front-to-back layer list; the last layer is fully opaque.
struct SceneSpec {
    std::vector<SceneLayer> layers;

    int height() const { return layers.front().texture.height; }
    int width() const { return layers.front().texture.width; }
    int channels() const { return layers.front().texture.channels; }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("SceneSpec: no layers");
        const SceneLayer& back = layers.back();
        for (std::uint8_t a : back.alpha)
            if (a == 0) throw std::invalid_argument("SceneSpec: background must be opaque");
        for (const SceneLayer& l : layers)
            if (l.texture.height != height() || l.texture.width != width() ||
                l.texture.channels != channels())
                throw std::invalid_argument("SceneSpec: layer shape mismatch");
    }
};

namespace detail {

inline int nearest_clamped(double t, int n) {
    int i = static_cast<int>(std::lround(t));
    return std::clamp(i, 0, n - 1);
}

// First layer (front-to-back) whose alpha covers the ray position
// x + u * offset(layer); color via bilinear, depth via the winning layer.
template <class OffsetFn>
inline int trace_layers(const SceneSpec& scene, int y, int x, const Vec2& u,
                        OffsetFn&& offset, double* py, double* px) {
    *py = y;
    *px = x;
    for (size_t l = 0; l < scene.layers.size(); ++l) {
        const SceneLayer& layer = scene.layers[l];
        double shift = offset(layer);
        double sy = y + u.y * shift;
        double sx = x + u.x * shift;
        int ny = nearest_clamped(sy, layer.texture.height);
        int nx = nearest_clamped(sx, layer.texture.width);
        if (layer.alpha[static_cast<size_t>(ny) * layer.texture.width + nx] != 0) {
            *py = sy;
            *px = sx;
            return static_cast<int>(l);
        }
    }
    return static_cast<int>(scene.layers.size()) - 1; // unreachable: background opaque
}

} // namespace detail

struct OracleView {
    Image image;
    DepthMap depth;
};

/// Occlusion-correct pinhole view at aperture position u, plus its z-buffer.
inline OracleView oracle_view(const SceneSpec& scene, const Vec2& u) {
    scene.validate();
    const int h = scene.height(), w = scene.width(), ch = scene.channels();
    OracleView out{Image(h, w, ch), DepthMap(h, w)};
    parallel_for(static_cast<std::int64_t>(h), [&](std::int64_t yy) {
        int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            double sy, sx;
            int l = detail::trace_layers(
                scene, y, x, u, [](const SceneLayer& lay) { return lay.disparity; }, &sy, &sx);
            const SceneLayer& layer = scene.layers[static_cast<size_t>(l)];
            for (int c = 0; c < ch; ++c)
                out.image.at(y, x, c) = sample_bilinear(layer.texture, sy, sx, c);
            out.depth.at(y, x) = layer.disparity;
        }
    });
    return out;
}

/// Stacks oracle views over the full aperture grid.
inline LightField oracle_lightfield(const SceneSpec& scene, const ApertureMask& ap) {
    const int h = scene.height(), w = scene.width(), ch = scene.channels();
    LightField lf(h, w, ap.grid_size, ch);
    for (int v = 0; v < ap.view_count(); ++v) {
        OracleView view = oracle_view(scene, ap.coord(v));
        std::copy(view.image.data.begin(), view.image.data.end(), lf.view(v));
    }
    return lf;
}

/// Ground-truth shallow depth-of-field image by direct per-ray evaluation:
/// every aperture sample traces the layer stack at x + u*(z - focus), so a
/// scene lying entirely at the focus disparity reproduces its texture
/// exactly.
inline Image oracle_sdof(const SceneSpec& scene, const ApertureMask& ap, double focus) {
    scene.validate();
    const int h = scene.height(), w = scene.width(), ch = scene.channels();
    Image out(h, w, ch, 0.0);
    parallel_for(static_cast<std::int64_t>(h), [&](std::int64_t yy) {
        int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            for (int v = 0; v < ap.view_count(); ++v) {
                double wv = ap.weight(v);
                if (wv == 0.0) continue;
                const Vec2& u = ap.coord(v);
                double sy, sx;
                int l = detail::trace_layers(
                    scene, y, x, u,
                    [&](const SceneLayer& lay) { return lay.disparity - focus; }, &sy, &sx);
                const SceneLayer& layer = scene.layers[static_cast<size_t>(l)];
                for (int c = 0; c < ch; ++c)
                    out.at(y, x, c) += wv / ap.weight_sum *
                                       sample_bilinear(layer.texture, sy, sx, c);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Procedural test scenes
// ---------------------------------------------------------------------------

/// Band-limited noise texture: seeded white noise smoothed by repeated box
/// blurs, rescaled to [0.1, 0.9].
inline Image make_noise_texture(int h, int w, int ch, std::uint32_t seed, int blur_passes = 3) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image img(h, w, ch);
    for (double& v : img.data) v = uni(rng);
    Image tmp(h, w, ch);
    for (int pass = 0; pass < blur_passes; ++pass) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            acc += img.at(std::clamp(y + dy, 0, h - 1),
                                          std::clamp(x + dx, 0, w - 1), c);
                    tmp.at(y, x, c) = acc / 9.0;
                }
        std::swap(img.data, tmp.data);
    }
    double lo = img.data[0], hi = img.data[0];
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double scale = hi > lo ? 0.8 / (hi - lo) : 0.0;
    for (double& v : img.data) v = 0.1 + (v - lo) * scale;
    return img;
}

inline Image make_checkerboard(int h, int w, int ch, int cell, double lo = 0.15, double hi = 0.85) {
    Image img(h, w, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = ((y / cell) + (x / cell)) % 2 == 0 ? hi : lo;
            for (int c = 0; c < ch; ++c) img.at(y, x, c) = v;
        }
    return img;
}

inline std::vector<std::uint8_t> full_alpha(int h, int w) {
    return std::vector<std::uint8_t>(static_cast<size_t>(h) * w, 1);
}

enum class SceneKind { single_plane, two_plane, occluder, textured_random };

inline SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "single_plane") return SceneKind::single_plane;
    if (s == "two_plane") return SceneKind::two_plane;
    if (s == "occluder") return SceneKind::occluder;
    if (s == "textured_random") return SceneKind::textured_random;
    throw std::invalid_argument("unknown scene kind: " + s);
}

inline const char* to_string(SceneKind k) {
    switch (k) {
        case SceneKind::single_plane: return "single_plane";
        case SceneKind::two_plane: return "two_plane";
        case SceneKind::occluder: return "occluder";
        case SceneKind::textured_random: return "textured_random";
    }
    return "?";
}

/// Deterministic procedural scenes keyed by kind and seed.
///
///  single_plane    one opaque band-limited-noise plane at disparity +3
///  two_plane       textured foreground blob at +4 over a textured
///                  background at -4 (the depth-recovery fixture)
///  occluder        checkerboard bar at +4 in front of a noise plane at -4
///                  (the Fig.-3-style failure fixture)
///  textured_random one high-detail noise plane at disparity 0
inline SceneSpec make_test_scene(SceneKind kind, std::uint32_t seed, int h = 64, int w = 64) {
    SceneSpec scene;
    switch (kind) {
        case SceneKind::single_plane: {
            SceneLayer l;
            l.texture = make_noise_texture(h, w, 3, seed, 4);
            l.alpha = full_alpha(h, w);
            l.disparity = 3.0;
            scene.layers.push_back(std::move(l));
            break;
        }
        case SceneKind::two_plane: {
            SceneLayer front;
            front.texture = make_noise_texture(h, w, 3, seed + 1, 2);
            front.alpha.assign(static_cast<size_t>(h) * w, 0);
            // Rectangular foreground blob covering roughly half the image, so
            // neither plane dominates the supervision losses.
            for (int y = h / 8; y < 7 * h / 8; ++y)
                for (int x = w / 8; x < 3 * w / 4; ++x)
                    front.alpha[static_cast<size_t>(y) * w + x] = 1;
            front.disparity = 4.0;
            SceneLayer back;
            back.texture = make_noise_texture(h, w, 3, seed + 2, 2);
            back.alpha = full_alpha(h, w);
            back.disparity = -4.0;
            scene.layers.push_back(std::move(front));
            scene.layers.push_back(std::move(back));
            break;
        }
        case SceneKind::occluder: {
            SceneLayer front;
            front.texture = make_checkerboard(h, w, 3, 4);
            front.alpha.assign(static_cast<size_t>(h) * w, 0);
            // Vertical bar through the middle.
            for (int y = 0; y < h; ++y)
                for (int x = 3 * w / 8; x < 5 * w / 8; ++x)
                    front.alpha[static_cast<size_t>(y) * w + x] = 1;
            front.disparity = 4.0;
            SceneLayer back;
            back.texture = make_noise_texture(h, w, 3, seed + 5, 2);
            back.alpha = full_alpha(h, w);
            back.disparity = -4.0;
            scene.layers.push_back(std::move(front));
            scene.layers.push_back(std::move(back));
            break;
        }
        case SceneKind::textured_random: {
            SceneLayer l;
            l.texture = make_noise_texture(h, w, 3, seed, 1);
            l.alpha = full_alpha(h, w);
            l.disparity = 0.0;
            scene.layers.push_back(std::move(l));
            break;
        }
    }
    scene.validate();
    return scene;
}

/// Central-view depth map of a scene (the z-buffer at u = 0).
inline DepthMap scene_depth(const SceneSpec& scene) {
    return oracle_view(scene, Vec2{0.0, 0.0}).depth;
}

} // namespace defocus
