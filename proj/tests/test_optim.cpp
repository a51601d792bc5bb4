#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "defocus/optim.hpp"
#include "defocus/scenesim.hpp"
#include "oracle_helpers.hpp"

using namespace defocus;

TEST_CASE("l1_image_loss basics") {
    Image a = testref::random_image(8, 8, 3, 1);
    L1Loss zero = l1_image_loss(a, a);
    CHECK(zero.loss == 0.0);
    for (double v : zero.grad.data) CHECK(v == 0.0);

    Image b = a;
    for (double& v : b.data) v += 0.5;
    CHECK(l1_image_loss(a, b).loss == Catch::Approx(0.5).margin(1e-12));

    Image c = testref::random_image(8, 8, 3, 2);
    double ref = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) ref += std::abs(a.data[i] - c.data[i]);
    ref /= static_cast<double>(a.data.size());
    CHECK(l1_image_loss(a, c).loss == Catch::Approx(ref).margin(1e-12));

    Image d(8, 9, 3);
    CHECK_THROWS_AS(l1_image_loss(a, d), std::invalid_argument);
}

TEST_CASE("l1_image_loss subgradient matches finite differences away from ties") {
    Image a = testref::random_image(6, 6, 1, 3);
    Image b = testref::random_image(6, 6, 1, 4);
    L1Loss l = l1_image_loss(a, b);
    const double h = 1e-7;
    for (size_t i : {size_t{0}, size_t{11}, size_t{35}}) {
        Image ap = a, am = a;
        ap.data[i] += h;
        am.data[i] -= h;
        double fd = (l1_image_loss(ap, b).loss - l1_image_loss(am, b).loss) / (2 * h);
        CHECK(l.grad.data[i] == Catch::Approx(fd).margin(1e-9));
    }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged and decays moments") {
    std::vector<double> params{1.0, -2.0};
    std::vector<double> grads{0.0, 0.0};
    AdamState st;
    st.m = {0.5, -0.5};
    st.v = {0.25, 0.25};
    st.t = 3;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(params, grads, st, cfg);
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
    CHECK(st.m[0] == Catch::Approx(0.45));
    CHECK(st.v[0] == Catch::Approx(0.25 * 0.999));
}

TEST_CASE("adam with a constant gradient approaches a step of size lr") {
    std::vector<double> params{0.0};
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    std::vector<double> grads{0.3};
    double prev = 0.0;
    double step = 0.0;
    for (int i = 0; i < 500; ++i) {
        prev = params[0];
        adam_step(params, grads, st, cfg);
        step = prev - params[0];
    }
    CHECK(step == Catch::Approx(cfg.lr).epsilon(0.05));
}

TEST_CASE("adam drives a 1-D quadratic to the optimum") {
    std::vector<double> params{1.0};
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> grads{2.0 * params[0]};
        adam_step(params, grads, st, cfg);
    }
    CHECK(std::abs(params[0]) < 1e-2);
}

TEST_CASE("pinhole supervision with S = I is a no-op for the lf optimizer") {
    SupervisionSet sup;
    sup.image = make_noise_texture(16, 16, 3, 5, 2);
    sup.targets.push_back({sup.image, make_aperture(1)});
    OptimConfig cfg;
    cfg.steps = 5;
    cfg.smooth.cg_iters = 50;
    LfOptimResult res = optimize_depth_lf(sup, cfg);
    for (const auto& row : res.trace) CHECK(row.total == Catch::Approx(0.0).margin(1e-12));
    for (double v : res.depth.data) CHECK(std::abs(v) < 1e-9);
    CHECK(res.focus[0] == 0.0);
}

TEST_CASE("lf optimizer iterates stay inside the depth bounds") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 9, 24, 24);
    Image img = oracle_view(scene, Vec2{0, 0}).image;
    DepthMap gt = scene_depth(scene);
    ApertureMask ap = make_aperture(5);
    LfRenderConfig rc;
    rc.aperture = ap;
    rc.focus = -4.0;
    SupervisionSet sup;
    sup.image = img;
    sup.targets.push_back({render_light_field(img, gt, rc), ap});
    OptimConfig cfg;
    cfg.steps = 10;
    cfg.d_lo = -6.0;
    cfg.d_hi = 6.0;
    cfg.smooth.cg_iters = 40;
    LfOptimResult res = optimize_depth_lf(sup, cfg);
    for (double v : res.depth.data) {
        CHECK(v >= -6.0);
        CHECK(v <= 6.0);
    }
    CHECK(res.trace.size() == 10);
}

TEST_CASE("lf optimizer reduces the loss on a two-plane scene") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 13, 24, 24);
    Image img = oracle_view(scene, Vec2{0, 0}).image;
    DepthMap gt = scene_depth(scene);
    ApertureMask ap = make_aperture(5);
    SupervisionSet sup;
    sup.image = img;
    for (double focus : {-4.0, 4.0}) {
        LfRenderConfig rc;
        rc.aperture = ap;
        rc.focus = focus;
        sup.targets.push_back({render_light_field(img, gt, rc), ap});
    }
    OptimConfig cfg;
    cfg.steps = 40;
    cfg.smooth.cg_iters = 40;
    LfOptimResult res = optimize_depth_lf(sup, cfg);
    CHECK(res.trace.back().total < 0.8 * res.trace.front().total);
    CHECK(std::isfinite(res.trace.back().total));
}

TEST_CASE("comp optimizer reduces the loss and returns a valid depth map") {
    SceneSpec scene = make_test_scene(SceneKind::two_plane, 17, 24, 24);
    Image img = oracle_view(scene, Vec2{0, 0}).image;
    DepthMap gt = scene_depth(scene);
    DepthPlanes planes(-8, 8);
    auto stack = blur_stack(img, planes);
    SupervisionSet sup;
    sup.image = img;
    ApertureMask ap = make_aperture(13);
    for (double focus : {-4.0, 4.0}) {
        DepthPMF p(24, 24, planes, 0.0);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                p.at(y, x, static_cast<int>(gt.at(y, x)) - planes.d_min) = 1.0;
        sup.targets.push_back({render_from_pmf(stack, p, focus), ap});
    }
    OptimConfig cfg;
    cfg.steps = 60;
    cfg.planes = planes;
    CompOptimResult res = optimize_depth_comp(sup, cfg);
    CHECK(res.trace.back().total < 0.7 * res.trace.front().total);
    for (double v : res.depth.data) {
        CHECK(v >= planes.d_min);
        CHECK(v <= planes.d_max);
    }
}

TEST_CASE("dominant TV with constant-image supervision keeps the PMF spatially flat") {
    SupervisionSet sup;
    sup.image = Image(16, 16, 3, 0.5);
    sup.targets.push_back({sup.image, make_aperture(5)});
    OptimConfig cfg;
    cfg.steps = 20;
    cfg.lambda_tv = 1e3;
    cfg.planes = DepthPlanes(-5, 5);
    CompOptimResult res = optimize_depth_comp(sup, cfg);
    // Constant image: the data term is flat, TV keeps the field constant.
    double first = res.depth.at(0, 0);
    for (double v : res.depth.data) CHECK(v == first);
}

TEST_CASE("focus distance is recovered when depth is frozen at ground truth") {
    SceneSpec scene = make_test_scene(SceneKind::single_plane, 23, 24, 24);
    Image img = oracle_view(scene, Vec2{0, 0}).image;
    DepthMap gt = scene_depth(scene); // constant plane at +3
    ApertureMask ap = make_aperture(5);
    const double true_focus = 1.0; // nearer hypothesis than the mirror at 5
    ViewDepthStack stack = expand_depth(gt, ap, 3);
    Image target = render_from_stack(img, stack, ap, true_focus);

    std::vector<double> focus{0.0};
    AdamState st;
    AdamConfig acfg;
    acfg.lr = 2e-2;
    for (int i = 0; i < 300; ++i) {
        Image rendered = render_from_stack(img, stack, ap, focus[0]);
        L1Loss l1 = l1_image_loss(rendered, target);
        StackRenderGrad g = render_from_stack_backward(img, stack, ap, focus[0], l1.grad);
        std::vector<double> grads{g.d_focus};
        adam_step(focus, grads, st, acfg);
    }
    CHECK(std::abs(focus[0] - true_focus) < 0.5);
}
