#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "defocus/image.hpp"
#include "defocus/comprender.hpp"
#include "defocus/scenesim.hpp"

namespace defocus {

// ---------------------------------------------------------------------------
// PNG (8-bit, values mapped linearly as byte/255)
// ---------------------------------------------------------------------------

inline Image load_png(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw std::runtime_error("load_png: cannot read " + path + ": " + png.message);
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int ch = color ? 3 : 1;
    std::vector<std::uint8_t> buf(static_cast<size_t>(PNG_IMAGE_SIZE(png)));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw std::runtime_error("load_png: decode failed for " + path + ": " + png.message);
    }
    Image img(static_cast<int>(png.height), static_cast<int>(png.width), ch);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

/// Writes an 8-bit PNG; values are clamped to [0,1] and quantized.
inline void save_png(const std::string& path, const Image& img) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buf(img.data.size());
    for (size_t i = 0; i < buf.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("save_png: cannot write " + path + ": " + png.message);
}

// ---------------------------------------------------------------------------
// PFM (little-endian, scale -1.0, rows bottom-to-top)
// ---------------------------------------------------------------------------

namespace detail {

inline void write_pfm_data(std::ofstream& f, const double* data, int h, int w, int ch) {
    std::vector<float> row(static_cast<size_t>(w) * ch);
    for (int y = h - 1; y >= 0; --y) {
        const double* src = data + static_cast<size_t>(y) * w * ch;
        for (size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(src[i]);
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

struct PfmHeader {
    bool color = false;
    int width = 0;
    int height = 0;
    double scale = -1.0;
    std::vector<std::string> comments;
};

inline PfmHeader read_pfm_header(std::ifstream& f, const std::string& path) {
    PfmHeader hd;
    std::string tag;
    f >> tag;
    if (tag == "PF") hd.color = true;
    else if (tag == "Pf") hd.color = false;
    else throw std::runtime_error("load_pfm: " + path + " is not a PFM file");
    // Allow comment lines between header tokens.
    auto next_token = [&](std::string& out) {
        while (f >> out) {
            if (out[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                hd.comments.push_back(out.substr(1) + rest);
                continue;
            }
            return;
        }
        throw std::runtime_error("load_pfm: truncated header in " + path);
    };
    std::string tok;
    next_token(tok);
    hd.width = std::stoi(tok);
    next_token(tok);
    hd.height = std::stoi(tok);
    next_token(tok);
    hd.scale = std::stod(tok);
    if (hd.scale >= 0.0)
        throw std::runtime_error("load_pfm: big-endian PFM not supported: " + path);
    f.get(); // single whitespace before the raster
    return hd;
}

inline void read_pfm_data(std::ifstream& f, double* data, int h, int w, int ch,
                          const std::string& path) {
    std::vector<float> row(static_cast<size_t>(w) * ch);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!f) throw std::runtime_error("load_pfm: truncated data in " + path);
        double* dst = data + static_cast<size_t>(y) * w * ch;
        for (size_t i = 0; i < row.size(); ++i) dst[i] = row[i];
    }
}

} // namespace detail

inline void save_pfm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_pfm: cannot open " + path);
    f << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n-1.0\n";
    detail::write_pfm_data(f, img.data.data(), img.height, img.width, img.channels);
}

inline void save_pfm(const std::string& path, const DepthMap& z) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_pfm: cannot open " + path);
    f << "Pf\n" << z.width << " " << z.height << "\n-1.0\n";
    detail::write_pfm_data(f, z.data.data(), z.height, z.width, 1);
}

inline Image load_pfm_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_pfm: cannot open " + path);
    auto hd = detail::read_pfm_header(f, path);
    Image img(hd.height, hd.width, hd.color ? 3 : 1);
    detail::read_pfm_data(f, img.data.data(), hd.height, hd.width, img.channels, path);
    return img;
}

inline DepthMap load_pfm_depth(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_pfm: cannot open " + path);
    auto hd = detail::read_pfm_header(f, path);
    if (hd.color) throw std::runtime_error("load_pfm: expected grayscale depth in " + path);
    DepthMap z(hd.height, hd.width);
    detail::read_pfm_data(f, z.data.data(), hd.height, hd.width, 1, path);
    return z;
}

// ---------------------------------------------------------------------------
// Depth PMF as a multi-layer PFM: n H x W planes concatenated vertically,
// plane disparities recorded in a header comment.
// ---------------------------------------------------------------------------

inline void save_pmf(const std::string& path, const DepthPMF& p) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_pmf: cannot open " + path);
    const int n = p.plane_count();
    f << "Pf\n"
      << "# defocus-pmf planes " << p.planes.d_min << " " << p.planes.d_max
      << " height " << p.height << "\n"
      << p.width << " " << p.height * n << "\n-1.0\n";
    // Repack (y, x, j) -> plane-major tall image.
    std::vector<double> tall(static_cast<size_t>(n) * p.height * p.width);
    for (int j = 0; j < n; ++j)
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                tall[(static_cast<size_t>(j) * p.height + y) * p.width + x] = p.at(y, x, j);
    detail::write_pfm_data(f, tall.data(), p.height * n, p.width, 1);
}

inline DepthPMF load_pmf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_pmf: cannot open " + path);
    auto hd = detail::read_pfm_header(f, path);
    if (hd.color) throw std::runtime_error("load_pmf: expected grayscale planes in " + path);
    int d_min = 0, d_max = 0, h = 0;
    bool found = false;
    for (const std::string& c : hd.comments) {
        std::istringstream ss(c);
        std::string word;
        ss >> word;
        if (word != "defocus-pmf") continue;
        ss >> word >> d_min >> d_max >> word >> h;
        found = true;
    }
    if (!found) throw std::runtime_error("load_pmf: missing plane comment in " + path);
    DepthPlanes planes(d_min, d_max);
    const int n = planes.count();
    if (hd.height != h * n)
        throw std::runtime_error("load_pmf: height does not match plane count in " + path);
    std::vector<double> tall(static_cast<size_t>(hd.height) * hd.width);
    detail::read_pfm_data(f, tall.data(), hd.height, hd.width, 1, path);
    DepthPMF p(h, hd.width, planes);
    for (int j = 0; j < n; ++j)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < hd.width; ++x)
                p.at(y, x, j) = tall[(static_cast<size_t>(j) * h + y) * hd.width + x];
    return p;
}

// ---------------------------------------------------------------------------
// Scene manifests
// ---------------------------------------------------------------------------

struct SceneFiles {
    std::string manifest;
    std::vector<std::string> assets;
};

/// Writes layer assets plus a plain-text manifest listing them front-to-back.
inline SceneFiles save_scene(const SceneSpec& scene, const std::string& dir,
                             const std::string& stem = "scene") {
    SceneFiles out;
    out.manifest = dir + "/" + stem + "_manifest.txt";
    std::ofstream mf(out.manifest);
    if (!mf) throw std::runtime_error("save_scene: cannot open " + out.manifest);
    mf << "defocus-scene layers " << scene.layers.size() << "\n";
    for (size_t l = 0; l < scene.layers.size(); ++l) {
        const SceneLayer& layer = scene.layers[l];
        std::string tex = stem + "_layer" + std::to_string(l) + "_texture.png";
        std::string alp = stem + "_layer" + std::to_string(l) + "_alpha.png";
        save_png(dir + "/" + tex, layer.texture);
        Image a(layer.texture.height, layer.texture.width, 1);
        for (size_t i = 0; i < a.data.size(); ++i) a.data[i] = layer.alpha[i] ? 1.0 : 0.0;
        save_png(dir + "/" + alp, a);
        mf << "layer " << l << " disparity " << layer.disparity << " texture " << tex
           << " alpha " << alp << "\n";
        out.assets.push_back(tex);
        out.assets.push_back(alp);
    }
    return out;
}

inline SceneSpec load_scene(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("load_scene: cannot open " + manifest_path);
    std::string dir = ".";
    if (auto pos = manifest_path.find_last_of('/'); pos != std::string::npos)
        dir = manifest_path.substr(0, pos);
    std::string word;
    size_t count = 0;
    mf >> word >> word >> count;
    SceneSpec scene;
    for (size_t l = 0; l < count; ++l) {
        size_t idx;
        double disparity;
        std::string tex, alp;
        mf >> word >> idx >> word >> disparity >> word >> tex >> word >> alp;
        if (!mf) throw std::runtime_error("load_scene: malformed manifest " + manifest_path);
        SceneLayer layer;
        layer.disparity = disparity;
        layer.texture = load_png(dir + "/" + tex);
        Image a = load_png(dir + "/" + alp);
        layer.alpha.resize(a.data.size());
        for (size_t i = 0; i < a.data.size(); ++i)
            layer.alpha[i] = a.data[i] >= 0.5 ? 1 : 0;
        scene.layers.push_back(std::move(layer));
    }
    scene.validate();
    return scene;
}

} // namespace defocus
