// Test-side oracles, deliberately independent of the library implementation:
// finite differences for gradients, direct sliding-window SSIM, naive metric
// formulas, and unshifted softmax forms.
#pragma once

#include "swinfuse/image.hpp"
#include "swinfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace oracles {

// ---------------------------------------------------------------------------
// Central finite differences vs tape gradients
// ---------------------------------------------------------------------------

struct GradCheck {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    double worst_ad = 0.0;   // tape gradient at the worst element
    double worst_fd = 0.0;   // finite-difference estimate there
};

// forward() must rebuild the computation from the current contents of
// `params` and return a scalar. The relative error uses a 1e-4 magnitude
// floor: below it the comparison is effectively absolute at 1e-8, which sits
// two orders above the central-difference round-off (~1e-10 for loss values
// of order 1..10) and four orders below any genuinely wrong gradient.
inline GradCheck grad_check(std::vector<swinfuse::Tensor<double>> params,
                            const std::function<swinfuse::Tensor<double>()>& forward,
                            double h = 1e-5) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    swinfuse::Tensor<double> root = forward();
    swinfuse::backward(root);

    std::vector<std::vector<double>> ad;
    for (auto& p : params)
        ad.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

    for (auto& p : params) p.set_requires_grad(false);

    GradCheck r;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& data = params[k].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double v = data[i];
            data[i] = v + h;
            const double f1 = forward().value();
            data[i] = v - h;
            const double f2 = forward().value();
            data[i] = v;
            const double fd = (f1 - f2) / (2.0 * h);
            const double g = ad[k][i];
            const double denom = std::max({std::abs(g), std::abs(fd), 1e-4});
            const double rel = std::abs(g - fd) / denom;
            if (rel > r.max_rel_err) {
                r.max_rel_err = rel;
                r.worst_ad = g;
                r.worst_fd = fd;
            }
            ++r.checked;
        }
    }
    for (auto& p : params) p.set_requires_grad(true);
    return r;
}

// ---------------------------------------------------------------------------
// Unshifted softmax forms
// ---------------------------------------------------------------------------

// Two-way softmax exactly as written, no max subtraction. Overflows for large
// inputs; used to confirm the stable evaluation agrees where this one works.
inline std::pair<double, double> naive_two_way_softmax(double a, double b) {
    const double ea = std::exp(a), eb = std::exp(b);
    return {ea / (ea + eb), eb / (ea + eb)};
}

inline std::vector<double> naive_softmax_row(const std::vector<double>& row) {
    std::vector<double> out(row.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp(row[i]);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

// ---------------------------------------------------------------------------
// Direct sliding-window SSIM (weighted moments per window position)
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_window(int size, double sigma = 1.5) {
    std::vector<double> k(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            k[static_cast<std::size_t>(i) * size + j] =
                std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * sigma * sigma));
            sum += k[static_cast<std::size_t>(i) * size + j];
        }
    for (auto& v : k) v /= sum;
    return k;
}

struct SsimTerms {
    double mean_ssim = 0.0;
    double mean_lum = 0.0;
    double mean_contrast = 0.0;
};

// Direct evaluation on row-major data: per valid window position, weighted
// mean/variance/covariance computed from squared deviations.
inline SsimTerms naive_ssim_terms(const std::vector<double>& a, const std::vector<double>& b,
                                  int H, int W, int window, double dynamic_range) {
    const auto k = gaussian_window(window);
    const double C1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double C2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    SsimTerms t;
    std::size_t count = 0;
    for (int i = 0; i + window <= H; ++i)
        for (int j = 0; j + window <= W; ++j) {
            double ma = 0.0, mb = 0.0;
            for (int u = 0; u < window; ++u)
                for (int v = 0; v < window; ++v) {
                    const double wgt = k[static_cast<std::size_t>(u) * window + v];
                    ma += wgt * a[static_cast<std::size_t>(i + u) * W + (j + v)];
                    mb += wgt * b[static_cast<std::size_t>(i + u) * W + (j + v)];
                }
            double va = 0.0, vb = 0.0, cab = 0.0;
            for (int u = 0; u < window; ++u)
                for (int v = 0; v < window; ++v) {
                    const double wgt = k[static_cast<std::size_t>(u) * window + v];
                    const double da = a[static_cast<std::size_t>(i + u) * W + (j + v)] - ma;
                    const double db = b[static_cast<std::size_t>(i + u) * W + (j + v)] - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cab += wgt * da * db;
                }
            const double lum = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
            const double con = (2.0 * cab + C2) / (va + vb + C2);
            t.mean_lum += lum;
            t.mean_contrast += con;
            t.mean_ssim += lum * con;
            ++count;
        }
    t.mean_lum /= static_cast<double>(count);
    t.mean_contrast /= static_cast<double>(count);
    t.mean_ssim /= static_cast<double>(count);
    return t;
}

inline double naive_ssim(const std::vector<double>& a, const std::vector<double>& b, int H, int W,
                         int window, double dynamic_range) {
    return naive_ssim_terms(a, b, H, W, window, dynamic_range).mean_ssim;
}

// ---------------------------------------------------------------------------
// Naive metric formulas on the 0..255 domain
// ---------------------------------------------------------------------------

inline std::vector<double> to255(const swinfuse::ImagePlane& p) {
    std::vector<double> v(p.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (static_cast<double>(p.pixels[i]) + 1.0) / 2.0 * 255.0;
    return v;
}

inline double naive_ag(const swinfuse::ImagePlane& p) {
    const auto g = to255(p);
    const int H = p.height, W = p.width;
    double acc = 0.0;
    int n = 0;
    for (int j = 0; j < W - 1; ++j)
        for (int i = 0; i < H - 1; ++i) {
            const double dx = g[static_cast<std::size_t>(i) * W + j + 1] - g[static_cast<std::size_t>(i) * W + j];
            const double dy = g[static_cast<std::size_t>(i + 1) * W + j] - g[static_cast<std::size_t>(i) * W + j];
            acc += std::sqrt(0.5 * (dx * dx + dy * dy));
            ++n;
        }
    return acc / n;
}

inline double naive_sf(const swinfuse::ImagePlane& p) {
    const auto g = to255(p);
    const int H = p.height, W = p.width;
    double rf = 0.0, cf = 0.0;
    for (int i = 0; i < H; ++i)
        for (int j = 1; j < W; ++j) {
            const double d = g[static_cast<std::size_t>(i) * W + j] - g[static_cast<std::size_t>(i) * W + j - 1];
            rf += d * d;
        }
    for (int j = 0; j < W; ++j)
        for (int i = 1; i < H; ++i) {
            const double d = g[static_cast<std::size_t>(i) * W + j] - g[static_cast<std::size_t>(i - 1) * W + j];
            cf += d * d;
        }
    return std::sqrt(rf / (static_cast<double>(H) * (W - 1)) + cf / (static_cast<double>(H - 1) * W));
}

inline double naive_sd(const swinfuse::ImagePlane& p) {
    const auto g = to255(p);
    double m = 0.0;
    for (double x : g) m += x;
    m /= static_cast<double>(g.size());
    double s = 0.0;
    for (double x : g) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(g.size()));
}

inline int naive_bin(double v) {
    return static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
}

inline double naive_mi_pair(const swinfuse::ImagePlane& x, const swinfuse::ImagePlane& y) {
    const auto gx = to255(x), gy = to255(y);
    std::vector<int> joint(256 * 256, 0);
    for (std::size_t i = 0; i < gx.size(); ++i)
        joint[static_cast<std::size_t>(naive_bin(gx[i])) * 256 + naive_bin(gy[i])] += 1;
    std::vector<double> px(256, 0.0), py(256, 0.0);
    const double n = static_cast<double>(gx.size());
    for (int a = 0; a < 256; ++a)
        for (int b = 0; b < 256; ++b) {
            px[static_cast<std::size_t>(a)] += joint[static_cast<std::size_t>(a) * 256 + b];
            py[static_cast<std::size_t>(b)] += joint[static_cast<std::size_t>(a) * 256 + b];
        }
    double mi = 0.0;
    for (int a = 0; a < 256; ++a)
        for (int b = 0; b < 256; ++b) {
            const double j = joint[static_cast<std::size_t>(a) * 256 + b];
            if (j == 0.0) continue;
            mi += (j / n) * std::log((j / n) / ((px[static_cast<std::size_t>(a)] / n) * (py[static_cast<std::size_t>(b)] / n)));
        }
    return mi;
}

inline double naive_mi(const swinfuse::ImagePlane& f, const swinfuse::ImagePlane& a,
                       const swinfuse::ImagePlane& b) {
    return naive_mi_pair(f, a) + naive_mi_pair(f, b);
}

// Shannon entropy of the 256-bin marginal, natural log.
inline double naive_entropy(const swinfuse::ImagePlane& x) {
    const auto g = to255(x);
    std::vector<double> hist(256, 0.0);
    for (double v : g) hist[static_cast<std::size_t>(naive_bin(v))] += 1.0;
    double h = 0.0;
    for (double c : hist) {
        if (c == 0.0) continue;
        const double p = c / static_cast<double>(g.size());
        h -= p * std::log(p);
    }
    return h;
}

inline double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double naive_scd(const swinfuse::ImagePlane& f, const swinfuse::ImagePlane& a,
                        const swinfuse::ImagePlane& b) {
    const auto gf = to255(f), ga = to255(a), gb = to255(b);
    std::vector<double> fmb(gf.size()), fma(gf.size());
    for (std::size_t i = 0; i < gf.size(); ++i) {
        fmb[i] = gf[i] - gb[i];
        fma[i] = gf[i] - ga[i];
    }
    return naive_pearson(fmb, ga) + naive_pearson(fma, gb);
}

inline std::pair<std::vector<double>, std::pair<int, int>> naive_pool2(const std::vector<double>& g,
                                                                       int H, int W) {
    const int h = H / 2, w = W / 2;
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out[static_cast<std::size_t>(i) * w + j] =
                0.25 * (g[static_cast<std::size_t>(2 * i) * W + 2 * j] +
                        g[static_cast<std::size_t>(2 * i) * W + 2 * j + 1] +
                        g[static_cast<std::size_t>(2 * i + 1) * W + 2 * j] +
                        g[static_cast<std::size_t>(2 * i + 1) * W + 2 * j + 1]);
    return {out, {h, w}};
}

inline double naive_ms_ssim(const swinfuse::ImagePlane& f, const swinfuse::ImagePlane& r, int scales) {
    static const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += weights[s];

    std::vector<double> a = to255(f), b = to255(r);
    int H = f.height, W = f.width;
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto terms = naive_ssim_terms(a, b, H, W, 11, 255.0);
        const double wgt = weights[s] / wsum;
        value *= std::pow(std::max(terms.mean_contrast, 0.0), wgt);
        if (s == scales - 1) {
            value *= std::pow(std::max(terms.mean_lum, 0.0), wgt);
        } else {
            auto [pa, da] = naive_pool2(a, H, W);
            auto [pb, db] = naive_pool2(b, H, W);
            a = std::move(pa);
            b = std::move(pb);
            H = da.first;
            W = da.second;
        }
    }
    return value;
}

// ---------------------------------------------------------------------------
// Random helpers
// ---------------------------------------------------------------------------

template <typename T>
swinfuse::Tensor<T> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                  T lo = T(-1), T hi = T(1)) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    swinfuse::Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

inline swinfuse::ImagePlane random_plane(int h, int w, std::mt19937_64& rng, float lo = -1.0f,
                                         float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    swinfuse::ImagePlane p(h, w);
    for (auto& v : p.pixels) v = dist(rng);
    return p;
}

} // namespace oracles
