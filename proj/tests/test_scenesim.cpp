#include <catch2/catch_amalgamated.hpp>

#include "defocus/metrics.hpp"
#include "defocus/scenesim.hpp"
#include "defocus/smooth.hpp"
#include "oracle_helpers.hpp"

using namespace defocus;

namespace {

// Independent per-ray re-derivation of a pinhole view: first layer whose
// nearest-neighbour alpha covers the line-plane intersection x + u*z wins.
Image per_ray_view(const SceneSpec& scene, Vec2 u) {
    const int h = scene.height(), w = scene.width(), ch = scene.channels();
    Image out(h, w, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (const SceneLayer& layer : scene.layers) {
                double sy = y + u.y * layer.disparity;
                double sx = x + u.x * layer.disparity;
                int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
                int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
                if (layer.alpha[static_cast<size_t>(ny) * w + nx] != 0) {
                    for (int c = 0; c < ch; ++c)
                        out.at(y, x, c) = sample_bilinear(layer.texture, sy, sx, c);
                    break;
                }
            }
        }
    return out;
}

SceneSpec constant_albedo_scene(double albedo) {
    SceneSpec s;
    SceneLayer front;
    front.texture = Image(32, 32, 3, albedo);
    front.alpha.assign(32 * 32, 0);
    for (int y = 8; y < 24; ++y)
        for (int x = 4; x < 16; ++x) front.alpha[static_cast<size_t>(y) * 32 + x] = 1;
    front.disparity = 3.0;
    SceneLayer back;
    back.texture = Image(32, 32, 3, albedo);
    back.alpha = full_alpha(32, 32);
    back.disparity = -2.0;
    s.layers.push_back(std::move(front));
    s.layers.push_back(std::move(back));
    return s;
}

} // namespace

TEST_CASE("oracle_view at u=0 equals direct front-to-back overlay") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 3);
    OracleView v = oracle_view(scene, Vec2{0.0, 0.0});
    for (int y = 0; y < scene.height(); ++y)
        for (int x = 0; x < scene.width(); ++x) {
            const SceneLayer& winner =
                scene.layers[scene.layers[0].opaque_at(y, x) ? 0 : 1];
            for (int c = 0; c < 3; ++c)
                CHECK(v.image.at(y, x, c) == winner.texture.at(y, x, c));
            CHECK(v.depth.at(y, x) == winner.disparity);
        }
}

TEST_CASE("single opaque layer view is the texture shifted by u*z") {
    SceneSpec scene;
    SceneLayer l;
    l.texture = make_noise_texture(16, 20, 3, 5);
    l.alpha = full_alpha(16, 20);
    l.disparity = 2.0;
    scene.layers.push_back(std::move(l));
    OracleView v = oracle_view(scene, Vec2{1.0, 0.0});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 18; ++x) // interior: x+2 stays in range
            for (int c = 0; c < 3; ++c)
                CHECK(v.image.at(y, x, c) == scene.layers[0].texture.at(y, x + 2, c));
}

TEST_CASE("two-plane view at u=(1,0) exposes hidden background, matches per-ray oracle") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 11);
    Vec2 u{1.0, 0.0};
    OracleView v = oracle_view(scene, u);
    Image ref = per_ray_view(scene, u);
    CHECK(testref::max_abs_diff(v.image, ref) < 1e-12);

    // Disocclusion: some pixel is foreground at u=0 but background here.
    OracleView center = oracle_view(scene, Vec2{0.0, 0.0});
    bool exposed = false;
    for (int y = 0; y < scene.height() && !exposed; ++y)
        for (int x = 0; x < scene.width() && !exposed; ++x)
            if (center.depth.at(y, x) == 4.0 && v.depth.at(y, x) == -4.0) exposed = true;
    CHECK(exposed);
}

TEST_CASE("oracle_lightfield with a pinhole is the central view") {
    SceneSpec scene = make_test_scene(SceneKind::single_plane, 4);
    LightField lf = oracle_lightfield(scene, make_aperture(1));
    OracleView v = oracle_view(scene, Vec2{0.0, 0.0});
    CHECK(testref::max_abs_diff(lf.view_image(0), v.image) == 0.0);
}

TEST_CASE("single-plane light field views are translates of one texture") {
    SceneSpec scene;
    SceneLayer l;
    l.texture = make_noise_texture(24, 24, 1, 9);
    l.alpha = full_alpha(24, 24);
    l.disparity = 3.0;
    scene.layers.push_back(std::move(l));
    ApertureMask ap = make_aperture(3);
    LightField lf = oracle_lightfield(scene, ap);
    const Image& tex = scene.layers[0].texture;
    for (int v = 0; v < ap.view_count(); ++v) {
        const Vec2& u = ap.coord(v);
        int sy = static_cast<int>(u.y * 3), sx = static_cast<int>(u.x * 3);
        for (int y = 5; y < 19; ++y)
            for (int x = 5; x < 19; ++x)
                CHECK(lf.at(y, x, v, 0) == tex.at(y + sy, x + sx, 0));
    }
}

TEST_CASE("epipolar slopes of a two-plane light field match the disparities") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 21);
    ApertureMask ap = make_aperture(3);
    LightField lf = oracle_lightfield(scene, ap);
    const int h = scene.height(), w = scene.width();
    // Central row of views: v = (vy=1, vx) -> u_x in {-1, 0, +1}.
    Image central = lf.view_image(1 * 3 + 1);
    Image right = lf.view_image(1 * 3 + 2); // u = (+1, 0)

    auto best_offset = [&](int y, int x0, int x1) {
        double best = 1e9;
        int arg = 0;
        for (int o = -6; o <= 6; ++o) {
            double score = 0.0;
            for (int x = x0; x < x1; ++x)
                score += std::abs(right.at(y, x + o, 0) - central.at(y, x, 0));
            if (score < best) {
                best = score;
                arg = o;
            }
        }
        return arg;
    };

    // Foreground blob (disparity +4): content appears shifted by -u*z.
    CHECK(best_offset(h / 2, w / 4, w / 4 + 8) == -4);
    // Background (disparity -4), sampled right of the blob and clear of its
    // shifted copies in every view.
    CHECK(best_offset(h / 2, 7 * w / 8 - 2, 7 * w / 8 + 4) == 4);
}

TEST_CASE("oracle_sdof of a scene at the focus disparity reproduces the texture") {
    SceneSpec scene;
    SceneLayer l;
    l.texture = make_noise_texture(20, 20, 3, 13);
    l.alpha = full_alpha(20, 20);
    l.disparity = 2.5;
    scene.layers.push_back(std::move(l));
    Image sdof = oracle_sdof(scene, make_aperture(7), 2.5);
    CHECK(testref::max_abs_diff(sdof, scene.layers[0].texture) < 1e-12);
}

TEST_CASE("oracle_sdof of a constant-texture scene is constant") {
    SceneSpec scene = constant_albedo_scene(0.6);
    Image sdof = oracle_sdof(scene, make_aperture(5), 1.5);
    for (double v : sdof.data) CHECK(v == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("energy: mean brightness equals albedo for any focus") {
    SceneSpec scene = constant_albedo_scene(0.37);
    for (double focus : {-3.0, 0.0, 2.7}) {
        Image sdof = oracle_sdof(scene, make_aperture(6), focus);
        double mean = 0.0;
        for (double v : sdof.data) mean += v;
        mean /= static_cast<double>(sdof.data.size());
        CHECK(mean == Catch::Approx(0.37).margin(1e-6));
    }
}

TEST_CASE("oracle_sdof with a pinhole equals the central view exactly") {
    SceneSpec scene = make_test_scene(SceneKind::occluder, 2);
    Image sdof = oracle_sdof(scene, make_aperture(1), 1.25);
    OracleView v = oracle_view(scene, Vec2{0.0, 0.0});
    CHECK(testref::max_abs_diff(sdof, v.image) == 0.0);
}

TEST_CASE("occluder sdof near the edge mixes in foreground colors, matches ray enumeration") {
    SceneSpec scene = make_test_scene(SceneKind::occluder, 8);
    ApertureMask ap = make_aperture(5);
    const double focus = -4.0; // back plane in focus
    Image sdof = oracle_sdof(scene, ap, focus);

    // Explicit ray enumeration at a background pixel near the occluder edge.
    const int h = scene.height(), w = scene.width();
    int y = h / 2, x = 5 * w / 8 + 2;
    REQUIRE(oracle_view(scene, Vec2{0, 0}).depth.at(y, x) == -4.0);
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        int fg_rays = 0;
        for (int v = 0; v < ap.view_count(); ++v) {
            if (ap.weight(v) == 0.0) continue;
            const Vec2& u = ap.coord(v);
            // Foreground test at x + u*(z_f - focus), else background.
            double fy = y + u.y * (4.0 - focus);
            double fx = x + u.x * (4.0 - focus);
            int ny = std::clamp(static_cast<int>(std::lround(fy)), 0, h - 1);
            int nx = std::clamp(static_cast<int>(std::lround(fx)), 0, w - 1);
            if (scene.layers[0].alpha[static_cast<size_t>(ny) * w + nx] != 0) {
                acc += sample_bilinear(scene.layers[0].texture, fy, fx, c);
                ++fg_rays;
            } else {
                acc += sample_bilinear(scene.layers[1].texture, y + u.y * (-4.0 - focus),
                                       x + u.x * (-4.0 - focus), c);
            }
        }
        CHECK(fg_rays > 0); // the blurred occluder reaches this pixel
        CHECK(sdof.at(y, x, c) == Catch::Approx(acc / ap.weight_sum).margin(1e-12));
    }
}

TEST_CASE("make_test_scene is deterministic in the seed") {
    for (SceneKind kind : {SceneKind::single_plane, SceneKind::two_plane,
                           SceneKind::occluder, SceneKind::textured_random}) {
        SceneSpec a = make_test_scene(kind, 42);
        SceneSpec b = make_test_scene(kind, 42);
        REQUIRE(a.layers.size() == b.layers.size());
        for (size_t l = 0; l < a.layers.size(); ++l) {
            CHECK(a.layers[l].texture.data == b.layers[l].texture.data);
            CHECK(a.layers[l].alpha == b.layers[l].alpha);
            CHECK(a.layers[l].disparity == b.layers[l].disparity);
        }
    }
}

TEST_CASE("occluder scene has two layers, front nearer than back") {
    SceneSpec scene = make_test_scene(SceneKind::occluder, 42);
    REQUIRE(scene.layers.size() == 2);
    CHECK(scene.layers[0].disparity > scene.layers[1].disparity);
}

TEST_CASE("textured_random scene is confident on at least half its pixels") {
    SceneSpec scene = make_test_scene(SceneKind::textured_random, 7);
    Image conf = confidence_from_image(scene.layers[0].texture);
    int confident = 0;
    for (double v : conf.data)
        if (v > 0.2) ++confident;
    CHECK(confident >= static_cast<int>(conf.data.size()) / 2);
}

TEST_CASE("unknown scene kind string raises invalid-argument") {
    CHECK_THROWS_AS(scene_kind_from_string("bogus"), std::invalid_argument);
}
