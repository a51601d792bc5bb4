// defocus: synthetic-defocus rendering, depth-from-defocus optimization, and
// ground-truth simulation in one command-line tool.
//
// Subcommands: simulate | render | optimize | gradcheck | evaluate
// Exit codes: 0 success, 1 validation/convergence failure, 2 usage/shape/IO.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "defocus/io.hpp"
#include "defocus/metrics.hpp"
#include "defocus/optim.hpp"
#include "defocus/runconfig.hpp"
#include "defocus/scenesim.hpp"

namespace fs = std::filesystem;
using namespace defocus;

namespace {

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& kind_str, unsigned seed, int m,
                 const std::vector<double>& focuses, const std::string& out_dir, int size) {
    SceneKind kind = scene_kind_from_string(kind_str);
    SceneSpec scene = make_test_scene(kind, seed, size, size);
    ApertureMask ap = make_aperture(m);

    fs::create_directories(out_dir);
    std::vector<std::string> files;

    OracleView central = oracle_view(scene, Vec2{0.0, 0.0});
    save_png(out_dir + "/allinfocus.png", central.image);
    files.push_back("allinfocus.png");
    save_pfm(out_dir + "/depth_gt.pfm", central.depth);
    files.push_back("depth_gt.pfm");

    for (size_t k = 0; k < focuses.size(); ++k) {
        Image sdof = oracle_sdof(scene, ap, focuses[k]);
        std::string name = "sdof_" + std::to_string(k) + ".png";
        save_png(out_dir + "/" + name, sdof);
        files.push_back(name);
    }

    SceneFiles sf = save_scene(scene, out_dir);
    files.insert(files.end(), sf.assets.begin(), sf.assets.end());
    files.push_back(fs::path(sf.manifest).filename().string());

    std::ofstream mf(out_dir + "/manifest.txt");
    if (!mf) throw std::runtime_error("simulate: cannot write manifest");
    mf << "defocus-simulate kind " << kind_str << " seed " << seed << " aperture " << m << "\n";
    for (size_t k = 0; k < focuses.size(); ++k) mf << "focus " << k << " " << focuses[k] << "\n";
    for (const std::string& f : files) mf << "file " << f << "\n";

    std::cout << "simulate: wrote " << files.size() + 1 << " files to " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

int cmd_render(const std::string& model, const std::string& image_path,
               const std::string& depth_path, const std::string& pmf_path, int m, int iters,
               double focus, const std::string& out_path, const std::string& out_pfm) {
    Image img = load_png(image_path);
    Image rendered;
    if (model == "lf") {
        DepthMap z = load_pfm_depth(depth_path);
        LfRenderConfig cfg;
        cfg.aperture = make_aperture(m);
        cfg.focus = focus;
        cfg.expansion_iters = iters;
        rendered = render_light_field(img, z, cfg);
    } else {
        DepthPMF p = load_pmf(pmf_path);
        if (p.height != img.height || p.width != img.width)
            throw std::invalid_argument("render: PMF shape does not match image");
        rendered = render_from_pmf(blur_stack(img, p.planes), p, focus);
    }
    save_png(out_path, rendered);
    if (!out_pfm.empty()) save_pfm(out_pfm, rendered);
    std::cout << "render: wrote " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

int cmd_optimize(const std::string& model, const std::string& image_path,
                 const std::vector<std::string>& target_paths, const RunConfig& rc,
                 const std::string& out_dir) {
    SupervisionSet sup;
    sup.image = load_png(image_path);
    ApertureMask ap = make_aperture(rc.aperture_grid);
    for (const std::string& t : target_paths) sup.targets.push_back({load_png(t), ap});

    fs::create_directories(out_dir);

    LossTrace trace;
    std::vector<double> focus;
    if (model == "lf") {
        LfOptimResult res = optimize_depth_lf(sup, rc.optim);
        save_pfm(out_dir + "/depth.pfm", res.depth);
        for (size_t i = 0; i < sup.targets.size(); ++i) {
            ViewDepthStack d = expand_depth(res.depth, ap, rc.optim.expansion_iters);
            save_png(out_dir + "/render_" + std::to_string(i) + ".png",
                     render_from_stack(sup.image, d, ap, res.focus[i]));
        }
        trace = std::move(res.trace);
        focus = std::move(res.focus);
    } else {
        CompOptimResult res = optimize_depth_comp(sup, rc.optim);
        save_pfm(out_dir + "/depth.pfm", res.depth);
        DepthPMF p = softmax_pmf(res.logits);
        save_pmf(out_dir + "/pmf.pfm", p);
        std::vector<Image> stack = blur_stack(sup.image, rc.optim.planes);
        for (size_t i = 0; i < sup.targets.size(); ++i)
            save_png(out_dir + "/render_" + std::to_string(i) + ".png",
                     render_from_pmf(stack, p, res.focus[i]));
        trace = std::move(res.trace);
        focus = std::move(res.focus);
    }

    write_loss_trace(out_dir + "/loss.csv", trace);
    double final_loss = trace.back().total;
    std::cout << "optimize: final loss " << final_loss << ", focus distances:";
    for (double d : focus) std::cout << " " << d;
    std::cout << "\n";
    return std::isfinite(final_loss) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct CheckReport {
    std::string group;
    double max_rel = 0.0;
    double threshold = 0.0;
    bool pass() const { return max_rel < threshold; }
};

double rel_err(double a, double b) {
    double denom = std::max(std::abs(a) + std::abs(b), 1e-7);
    return std::abs(a - b) / denom;
}

Image random_image(int h, int w, int ch, unsigned seed, bool smooth) {
    Image img = make_noise_texture(h, w, ch, seed, smooth ? 2 : 0);
    return img;
}

Image random_upstream(int h, int w, int ch, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Image img(h, w, ch);
    for (double& v : img.data) v = uni(rng);
    return img;
}

double dot_loss(const Image& upstream, const Image& rendered) {
    double acc = 0.0;
    for (size_t i = 0; i < upstream.data.size(); ++i) acc += upstream.data[i] * rendered.data[i];
    return acc;
}

// Smooth depth in [0.09, 0.41] with focus 0.55: every composed warp
// coordinate keeps its fractional part away from the bilinear lattice, so
// central differences see no kinks.
DepthMap gradcheck_depth(int h, int w, unsigned seed) {
    DepthMap z(h, w);
    Image field = make_noise_texture(h, w, 1, seed, 3);
    for (size_t i = 0; i < z.data.size(); ++i) z.data[i] = 0.05 + field.data[i] * 0.4;
    return z;
}

std::vector<CheckReport> check_lf(unsigned seed, int size, bool inject_fault) {
    const int h = size, w = size;
    Image img = random_image(h, w, 3, seed, true);
    DepthMap z = gradcheck_depth(h, w, seed + 1);
    Image upstream = random_upstream(h, w, 3, seed + 2);
    LfRenderConfig cfg;
    cfg.aperture = make_aperture(5);
    cfg.focus = 0.55;
    cfg.expansion_iters = 2;

    LfRenderGrad grad = render_light_field_grad(img, z, cfg, upstream);
    if (inject_fault) grad.d_depth.data[0] += 0.05 * (1.0 + std::abs(grad.d_depth.data[0]));

    const double hstep = 1e-4;
    const double base = dot_loss(upstream, render_light_field(img, z, cfg));
    CheckReport depth_report{"lf/depth", 0.0, 1e-3};
    for (size_t i = 0; i < z.data.size(); ++i) {
        DepthMap zp = z, zm = z;
        zp.data[i] += hstep;
        zm.data[i] -= hstep;
        double lp = dot_loss(upstream, render_light_field(img, zp, cfg));
        double lm = dot_loss(upstream, render_light_field(img, zm, cfg));
        // One-sided disagreement marks a bilinear kink; those components are
        // outside the gradient contract.
        if (rel_err((lp - base) / hstep, (base - lm) / hstep) > 0.004) continue;
        double fd = (lp - lm) / (2 * hstep);
        depth_report.max_rel = std::max(depth_report.max_rel, rel_err(grad.d_depth.data[i], fd));
    }

    CheckReport focus_report{"lf/focus", 0.0, 1e-3};
    for (double probe : {0.55, 0.5541, 0.5457, 0.5618}) {
        LfRenderConfig cb = cfg, cp = cfg, cm = cfg;
        cb.focus = probe;
        cp.focus = probe + hstep;
        cm.focus = probe - hstep;
        double lb = dot_loss(upstream, render_light_field(img, z, cb));
        double lp = dot_loss(upstream, render_light_field(img, z, cp));
        double lm = dot_loss(upstream, render_light_field(img, z, cm));
        if (rel_err((lp - lb) / hstep, (lb - lm) / hstep) > 0.004) continue;
        LfRenderGrad g = render_light_field_grad(img, z, cb, upstream);
        if (inject_fault) g.d_focus += 0.05 * (1.0 + std::abs(g.d_focus));
        focus_report.max_rel = rel_err(g.d_focus, (lp - lm) / (2 * hstep));
        break;
    }
    return {depth_report, focus_report};
}

std::vector<CheckReport> check_comp(unsigned seed, int size, bool inject_fault) {
    const int h = size, w = size;
    Image img = random_image(h, w, 3, seed, false);
    std::mt19937 rng(seed + 1);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    DepthLogits logits(h, w);
    for (double& v : logits.data) v = uni(rng);
    Image upstream = random_upstream(h, w, 3, seed + 2);
    const double focus = 0.4;

    std::vector<Image> stack = blur_stack(img, logits.planes);
    CompRenderGrad grad = render_compositional_grad(img, logits, focus, upstream, &stack);
    if (inject_fault) grad.d_logits.data[0] += 0.05 * (1.0 + std::abs(grad.d_logits.data[0]));

    const double hstep = 1e-3;
    CheckReport logit_report{"comp/logits", 0.0, 1e-4};
    for (size_t i = 0; i < logits.data.size(); ++i) {
        DepthLogits lp = logits, lm = logits;
        lp.data[i] += hstep;
        lm.data[i] -= hstep;
        double fd = (dot_loss(upstream, render_compositional(img, lp, focus, &stack)) -
                     dot_loss(upstream, render_compositional(img, lm, focus, &stack))) /
                    (2 * hstep);
        logit_report.max_rel = std::max(logit_report.max_rel, rel_err(grad.d_logits.data[i], fd));
    }

    CheckReport focus_report{"comp/focus", 0.0, 1e-4};
    {
        double fd = (dot_loss(upstream, render_compositional(img, logits, focus + hstep, &stack)) -
                     dot_loss(upstream, render_compositional(img, logits, focus - hstep, &stack))) /
                    (2 * hstep);
        focus_report.max_rel = rel_err(grad.d_focus, fd);
    }
    return {logit_report, focus_report};
}

std::vector<CheckReport> check_smooth(unsigned seed, int size, bool inject_fault) {
    const int h = size, w = size;
    Image guide = random_image(h, w, 3, seed, true);
    Image conf = confidence_from_image(guide);
    DepthMap target(h, w);
    std::mt19937 rng(seed + 1);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    for (double& v : target.data) v = uni(rng);
    DepthMap upstream(h, w);
    for (double& v : upstream.data) v = uni(rng);

    SmoothConfig cfg;
    cfg.cg_tol = 1e-12;
    cfg.cg_iters = 2000;

    SmoothResult grad = solve_edge_aware_grad(guide, conf, cfg, upstream);
    if (inject_fault) grad.depth.data[0] += 0.05 * (1.0 + std::abs(grad.depth.data[0]));

    auto loss_at = [&](const DepthMap& t) {
        SmoothResult r = solve_edge_aware(t, guide, conf, cfg);
        double acc = 0.0;
        for (size_t i = 0; i < r.depth.data.size(); ++i) acc += upstream.data[i] * r.depth.data[i];
        return acc;
    };

    const double hstep = 1e-4;
    CheckReport report{"smooth/target", 0.0, 1e-3};
    for (size_t i = 0; i < target.data.size(); ++i) {
        DepthMap tp = target, tm = target;
        tp.data[i] += hstep;
        tm.data[i] -= hstep;
        double fd = (loss_at(tp) - loss_at(tm)) / (2 * hstep);
        report.max_rel = std::max(report.max_rel, rel_err(grad.depth.data[i], fd));
    }
    return {report};
}

int cmd_gradcheck(const std::string& model, unsigned seed, int size, bool inject_fault) {
    std::vector<CheckReport> reports;
    if (model == "lf" || model == "all") {
        auto r = check_lf(seed, size > 0 ? size : 16, inject_fault);
        reports.insert(reports.end(), r.begin(), r.end());
    }
    if (model == "comp" || model == "all") {
        auto r = check_comp(seed, size > 0 ? size : 16, inject_fault);
        reports.insert(reports.end(), r.begin(), r.end());
    }
    if (model == "smooth" || model == "all") {
        auto r = check_smooth(seed, size > 0 ? size : 12, inject_fault);
        reports.insert(reports.end(), r.begin(), r.end());
    }
    bool all_pass = true;
    for (const auto& r : reports) {
        std::printf("%-14s max rel err %.3e  (threshold %.0e)  %s\n", r.group.c_str(),
                    r.max_rel, r.threshold, r.pass() ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass();
    }
    return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

Image load_any(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".pfm") {
        Image img = load_pfm_image(path);
        return img;
    }
    return load_png(path);
}

int cmd_evaluate(const std::string& pred_path, const std::string& ref_path,
                 const std::string& csv_path) {
    Image pred = load_any(pred_path);
    Image ref = load_any(ref_path);
    if (!pred.same_shape(ref)) throw std::invalid_argument("evaluate: shape mismatch");

    double p = psnr(pred, ref);
    double mae = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) mae += std::abs(pred.data[i] - ref.data[i]);
    mae /= static_cast<double>(pred.data.size());
    bool has_ssim = pred.height >= 11 && pred.width >= 11;
    double s = has_ssim ? ssim(pred, ref) : 0.0;

    std::printf("psnr %.4f\n", p);
    if (has_ssim) std::printf("ssim %.6f\n", s);
    std::printf("mae %.6f\n", mae);

    if (!csv_path.empty()) {
        bool exists = fs::exists(csv_path);
        std::ofstream f(csv_path, std::ios::app);
        if (!f) throw std::runtime_error("evaluate: cannot open " + csv_path);
        if (!exists) f << "pred,ref,psnr,ssim,mae\n";
        f.precision(10);
        f << pred_path << "," << ref_path << "," << p << "," << (has_ssim ? s : std::nan(""))
          << "," << mae << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable synthetic-defocus engine"};
    app.require_subcommand(1);

    std::string config_path;

    // simulate
    auto* sim = app.add_subcommand("simulate", "render ground-truth scene data");
    std::string sim_kind = "two_plane", sim_out = "out";
    unsigned sim_seed = 1;
    int sim_m = 13, sim_size = 64;
    std::vector<double> sim_focus;
    sim->add_option("--kind", sim_kind, "single_plane|two_plane|occluder|textured_random");
    sim->add_option("--seed", sim_seed, "scene seed");
    sim->add_option("--m", sim_m, "aperture grid size");
    sim->add_option("--dhat", sim_focus, "focus distance(s) for oracle renders");
    sim->add_option("--size", sim_size, "image side length");
    sim->add_option("--out", sim_out, "output directory")->required();

    // render
    auto* ren = app.add_subcommand("render", "render a shallow depth-of-field image");
    std::string ren_model = "lf", ren_image, ren_depth, ren_pmf, ren_out, ren_out_pfm;
    int ren_m = 13, ren_iters = 3;
    double ren_focus = 0.0;
    ren->add_option("--model", ren_model, "lf|comp")->check(CLI::IsMember({"lf", "comp"}));
    ren->add_option("--image", ren_image, "all-in-focus PNG")->required();
    ren->add_option("--depth", ren_depth, "depth PFM (lf model)");
    ren->add_option("--pmf", ren_pmf, "depth PMF PFM (comp model)");
    ren->add_option("--m", ren_m, "aperture grid size");
    ren->add_option("--expansion-iters", ren_iters, "depth expansion iterations");
    ren->add_option("--dhat", ren_focus, "focus distance");
    ren->add_option("--out", ren_out, "output PNG")->required();
    ren->add_option("--out-pfm", ren_out_pfm, "optional float output");

    // optimize
    auto* opt = app.add_subcommand("optimize", "recover depth from aperture supervision");
    std::string opt_model = "lf", opt_image, opt_out = "out";
    std::vector<std::string> opt_targets;
    RunConfig rc;
    opt->add_option("--model", opt_model, "lf|comp")->check(CLI::IsMember({"lf", "comp"}));
    opt->add_option("--image", opt_image, "all-in-focus PNG")->required();
    opt->add_option("--target", opt_targets, "shallow depth-of-field PNG(s)")->required();
    opt->add_option("--out", opt_out, "output directory")->required();
    opt->add_option("--config", config_path, "key = value defaults file");
    std::map<std::string, std::string> opt_overrides;
    for (const std::string& key : RunConfig::known_keys()) {
        opt->add_option_function<std::string>(
            "--" + key, [&opt_overrides, key](const std::string& v) { opt_overrides[key] = v; },
            "override config key " + key);
    }

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_model = "all";
    unsigned gc_seed = 7;
    int gc_size = 0;
    bool gc_fault = false;
    gc->add_option("--model", gc_model, "lf|comp|smooth|all")
        ->check(CLI::IsMember({"lf", "comp", "smooth", "all"}));
    gc->add_option("--seed", gc_seed, "fixture seed");
    gc->add_option("--size", gc_size, "instance side length (0 = per-model default)");
    gc->add_flag("--inject-fault", gc_fault, "corrupt one gradient (checker self-test)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "PSNR / SSIM / MAE between two files");
    std::string ev_pred, ev_ref, ev_csv;
    ev->add_option("--pred", ev_pred, "prediction (PNG or PFM)")->required();
    ev->add_option("--ref", ev_ref, "reference (PNG or PFM)")->required();
    ev->add_option("--csv", ev_csv, "append results to this CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) {
            if (sim_focus.empty()) sim_focus.push_back(0.0);
            return cmd_simulate(sim_kind, sim_seed, sim_m, sim_focus, sim_out, sim_size);
        }
        if (ren->parsed()) {
            if (ren_model == "lf" && ren_depth.empty())
                throw std::invalid_argument("render: --depth required for the lf model");
            if (ren_model == "comp" && ren_pmf.empty())
                throw std::invalid_argument("render: --pmf required for the comp model");
            return cmd_render(ren_model, ren_image, ren_depth, ren_pmf, ren_m, ren_iters,
                              ren_focus, ren_out, ren_out_pfm);
        }
        if (opt->parsed()) {
            if (!config_path.empty()) rc = load_run_config(config_path);
            for (const auto& [k, v] : opt_overrides) rc.set(k, v);
            return cmd_optimize(opt_model, opt_image, opt_targets, rc, opt_out);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_model, gc_seed, gc_size, gc_fault);
        if (ev->parsed()) return cmd_evaluate(ev_pred, ev_ref, ev_csv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return std::string(e.what()).find("non-finite") != std::string::npos ? 1 : 2;
    }
    return 0;
}
