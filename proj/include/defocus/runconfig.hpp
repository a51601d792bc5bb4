#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "defocus/optim.hpp"

namespace defocus {

/// Plain-text key = value run configuration. Mirrors the optimizer,
/// renderer, and smoothing settings; unknown keys are rejected.
struct RunConfig {
    OptimConfig optim;
    int aperture_grid = 13;
    double focus = 0.0;

    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "steps", "lr_depth", "lr_logits", "lr_focus", "lambda_d", "lambda_tv",
            "beta1", "beta2", "eps", "d_lo", "d_hi", "expansion_iters",
            "smooth_in_loop", "plane_min", "plane_max",
            "sigma_xy", "sigma_color", "lambda_s", "cg_iters", "cg_tol",
            "aperture_grid", "focus"};
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key))
            throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
        auto as_int = [&] { return std::stoi(value); };
        auto as_double = [&] { return std::stod(value); };
        auto as_bool = [&] {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw std::invalid_argument("RunConfig: bad boolean for '" + key + "'");
        };
        if (key == "steps") optim.steps = as_int();
        else if (key == "lr_depth") optim.lr_depth = as_double();
        else if (key == "lr_logits") optim.lr_logits = as_double();
        else if (key == "lr_focus") optim.lr_focus = as_double();
        else if (key == "lambda_d") optim.lambda_d = as_double();
        else if (key == "lambda_tv") optim.lambda_tv = as_double();
        else if (key == "beta1") optim.beta1 = as_double();
        else if (key == "beta2") optim.beta2 = as_double();
        else if (key == "eps") optim.eps = as_double();
        else if (key == "d_lo") optim.d_lo = as_double();
        else if (key == "d_hi") optim.d_hi = as_double();
        else if (key == "expansion_iters") optim.expansion_iters = as_int();
        else if (key == "smooth_in_loop") optim.smooth_in_loop = as_bool();
        else if (key == "plane_min") optim.planes = DepthPlanes(as_int(), optim.planes.d_max);
        else if (key == "plane_max") optim.planes = DepthPlanes(optim.planes.d_min, as_int());
        else if (key == "sigma_xy") optim.smooth.sigma_xy = as_double();
        else if (key == "sigma_color") optim.smooth.sigma_color = as_double();
        else if (key == "lambda_s") optim.smooth.lambda = as_double();
        else if (key == "cg_iters") optim.smooth.cg_iters = as_int();
        else if (key == "cg_tol") optim.smooth.cg_tol = as_double();
        else if (key == "aperture_grid") aperture_grid = as_int();
        else if (key == "focus") focus = as_double();
        validate();
    }

    void validate() const {
        if (optim.steps < 1) throw std::invalid_argument("RunConfig: steps must be positive");
        if (optim.lr_depth <= 0 || optim.lr_logits <= 0 || optim.lr_focus <= 0)
            throw std::invalid_argument("RunConfig: learning rates must be positive");
        if (optim.d_lo >= optim.d_hi)
            throw std::invalid_argument("RunConfig: depth bounds must be increasing");
        if (optim.expansion_iters < 1)
            throw std::invalid_argument("RunConfig: expansion_iters must be >= 1");
        if (optim.smooth.sigma_xy <= 0 || optim.smooth.sigma_color <= 0 ||
            optim.smooth.cg_iters < 1 || optim.smooth.cg_tol <= 0)
            throw std::invalid_argument("RunConfig: smoothing settings must be positive");
        if (aperture_grid < 1)
            throw std::invalid_argument("RunConfig: aperture_grid must be >= 1");
    }
};

/// Parses "key = value" lines; '#' starts a comment; blank lines ignored.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_run_config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream ss(line);
        std::string key, eq, value;
        if (!(ss >> key)) continue;
        if (!(ss >> eq >> value) || eq != "=")
            throw std::invalid_argument("RunConfig: malformed line " + std::to_string(lineno) +
                                        " in " + path);
        cfg.set(key, value);
    }
    return cfg;
}

} // namespace defocus
