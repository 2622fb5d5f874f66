#include "swinfuse/metrics.hpp"

#include "swinfuse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <vector>

namespace swinfuse::metrics {

namespace {

// Double-precision working copy in the 0..255 domain.
struct Grid {
    int h = 0, w = 0;
    std::vector<double> v;

    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
};

Grid to_grid(const ImagePlane& p) {
    Grid g;
    g.h = p.height;
    g.w = p.width;
    g.v.resize(p.pixels.size());
    for (std::size_t i = 0; i < g.v.size(); ++i)
        g.v[i] = (static_cast<double>(p.pixels[i]) + 1.0) / 2.0 * 255.0;
    return g;
}

void require_same_dims(const Grid& a, const Grid& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError(std::string(what) + ": image dimensions disagree");
}

double mean_of(const Grid& g) {
    double s = 0.0;
    for (double x : g.v) s += x;
    return s / static_cast<double>(g.v.size());
}

// Pearson correlation; 0 when either argument has zero variance.
double pearson(const Grid& x, const Grid& y) {
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double dx = x.v[i] - mx, dy = y.v[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

int bin_of(double v) {
    const double c = std::clamp(v, 0.0, 255.0);
    return static_cast<int>(std::lround(c));
}

// Separable Gaussian blur over valid positions only.
std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& x : k) x /= sum;
    return k;
}

Grid blur_valid(const Grid& g, const std::vector<double>& taps) {
    const int k = static_cast<int>(taps.size());
    Grid tmp;   // horizontal pass
    tmp.h = g.h;
    tmp.w = g.w - k + 1;
    tmp.v.assign(static_cast<std::size_t>(tmp.h) * tmp.w, 0.0);
    for (int i = 0; i < tmp.h; ++i)
        for (int j = 0; j < tmp.w; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * g.at(i, j + t);
            tmp.at(i, j) = s;
        }
    Grid out;   // vertical pass
    out.h = g.h - k + 1;
    out.w = tmp.w;
    out.v.assign(static_cast<std::size_t>(out.h) * out.w, 0.0);
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * tmp.at(i + t, j);
            out.at(i, j) = s;
        }
    return out;
}

Grid hadamard(const Grid& a, const Grid& b) {
    Grid out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

// 2x2 average pooling; trailing odd row/column dropped.
Grid avg_pool2(const Grid& g) {
    Grid out;
    out.h = g.h / 2;
    out.w = g.w / 2;
    out.v.assign(static_cast<std::size_t>(out.h) * out.w, 0.0);
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j)
            out.at(i, j) = 0.25 * (g.at(2 * i, 2 * j) + g.at(2 * i, 2 * j + 1) +
                                   g.at(2 * i + 1, 2 * j) + g.at(2 * i + 1, 2 * j + 1));
    return out;
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

// Mean luminance and contrast terms of SSIM at one scale.
std::pair<double, double> ssim_terms(const Grid& a, const Grid& b) {
    const double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double C2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto taps = gaussian_taps(kSsimWindow, kSsimSigma);

    const Grid mu_a = blur_valid(a, taps);
    const Grid mu_b = blur_valid(b, taps);
    const Grid saa = blur_valid(hadamard(a, a), taps);
    const Grid sbb = blur_valid(hadamard(b, b), taps);
    const Grid sab = blur_valid(hadamard(a, b), taps);

    double lum = 0.0, con = 0.0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = saa.v[i] - ma * ma;
        const double vb = sbb.v[i] - mb * mb;
        const double cab = sab.v[i] - ma * mb;
        lum += (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        con += (2.0 * cab + C2) / (va + vb + C2);
    }
    const auto n = static_cast<double>(mu_a.v.size());
    return {lum / n, con / n};
}

} // namespace

double avg_gradient(const ImagePlane& f) {
    const Grid g = to_grid(f);
    if (g.h < 2 || g.w < 2) throw ContractError("avg_gradient: image must be at least 2x2");
    double s = 0.0;
    for (int i = 0; i < g.h - 1; ++i)
        for (int j = 0; j < g.w - 1; ++j) {
            const double dx = g.at(i, j + 1) - g.at(i, j);
            const double dy = g.at(i + 1, j) - g.at(i, j);
            s += std::sqrt((dx * dx + dy * dy) / 2.0);
        }
    return s / (static_cast<double>(g.h - 1) * (g.w - 1));
}

double spatial_frequency(const ImagePlane& f) {
    const Grid g = to_grid(f);
    if (g.h < 2 || g.w < 2) throw ContractError("spatial_frequency: image must be at least 2x2");
    double rf = 0.0, cf = 0.0;
    for (int i = 0; i < g.h; ++i)
        for (int j = 1; j < g.w; ++j) {
            const double d = g.at(i, j) - g.at(i, j - 1);
            rf += d * d;
        }
    for (int i = 1; i < g.h; ++i)
        for (int j = 0; j < g.w; ++j) {
            const double d = g.at(i, j) - g.at(i - 1, j);
            cf += d * d;
        }
    rf = std::sqrt(rf / (static_cast<double>(g.h) * (g.w - 1)));
    cf = std::sqrt(cf / (static_cast<double>(g.h - 1) * g.w));
    return std::sqrt(rf * rf + cf * cf);
}

double std_dev(const ImagePlane& f) {
    const Grid g = to_grid(f);
    const double m = mean_of(g);
    double s = 0.0;
    for (double x : g.v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(g.v.size()));
}

namespace {

// MI of one image pair from a 256x256 joint histogram, natural log.
double mi_pair(const Grid& x, const Grid& y) {
    constexpr int K = 256;
    std::vector<double> joint(static_cast<std::size_t>(K) * K, 0.0);
    std::vector<double> px(K, 0.0), py(K, 0.0);
    const auto n = static_cast<double>(x.v.size());
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const int bx = bin_of(x.v[i]);
        const int by = bin_of(y.v[i]);
        joint[static_cast<std::size_t>(bx) * K + by] += 1.0;
        px[static_cast<std::size_t>(bx)] += 1.0;
        py[static_cast<std::size_t>(by)] += 1.0;
    }
    double mi = 0.0;
    for (int a = 0; a < K; ++a) {
        if (px[static_cast<std::size_t>(a)] == 0.0) continue;
        for (int b = 0; b < K; ++b) {
            const double j = joint[static_cast<std::size_t>(a) * K + b];
            if (j == 0.0) continue;
            const double pj = j / n;
            mi += pj * std::log(pj * n * n / (px[static_cast<std::size_t>(a)] * py[static_cast<std::size_t>(b)]));
        }
    }
    return mi;
}

} // namespace

double mutual_info(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b) {
    const Grid gf = to_grid(f), ga = to_grid(a), gb = to_grid(b);
    require_same_dims(gf, ga, "mutual_info");
    require_same_dims(gf, gb, "mutual_info");
    return mi_pair(gf, ga) + mi_pair(gf, gb);
}

double scd(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b) {
    const Grid gf = to_grid(f), ga = to_grid(a), gb = to_grid(b);
    require_same_dims(gf, ga, "scd");
    require_same_dims(gf, gb, "scd");
    Grid fmb = gf, fma = gf;
    for (std::size_t i = 0; i < gf.v.size(); ++i) {
        fmb.v[i] -= gb.v[i];
        fma.v[i] -= ga.v[i];
    }
    return pearson(fmb, ga) + pearson(fma, gb);
}

double ms_ssim(const ImagePlane& f, const ImagePlane& r, int scales) {
    if (scales < 1 || scales > 5)
        throw ContractError("ms_ssim: scale count must be in 1..5");
    Grid a = to_grid(f), b = to_grid(r);
    require_same_dims(a, b, "ms_ssim");
    {
        int h = a.h, w = a.w;
        for (int s = 1; s < scales; ++s) {
            h /= 2;
            w /= 2;
        }
        if (h < kSsimWindow || w < kSsimWindow)
            throw ContractError("ms_ssim: image " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                                " too small for " + std::to_string(scales) +
                                " scales; use fewer scales");
    }
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];

    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto [lum, con] = ssim_terms(a, b);
        const double weight = kMsSsimWeights[s] / wsum;
        value *= std::pow(std::max(con, 0.0), weight);
        if (s == scales - 1) value *= std::pow(std::max(lum, 0.0), weight);
        else {
            a = avg_pool2(a);
            b = avg_pool2(b);
        }
    }
    return value;
}

MetricReport evaluate(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b) {
    MetricReport r;
    r.ag = avg_gradient(f);
    r.sf = spatial_frequency(f);
    r.sd = std_dev(f);
    r.mi = mutual_info(f, a, b);
    r.scd = scd(f, a, b);
    r.ms_ssim = 0.5 * (ms_ssim(f, a) + ms_ssim(f, b));
    return r;
}

void write_csv_header(std::ostream& os) {
    os << "name,ag,sf,sd,mi,scd,ms_ssim\n";
}

void write_csv_row(std::ostream& os, const std::string& name, const MetricReport& r) {
    os << name << ',' << std::setprecision(9) << r.ag << ',' << r.sf << ',' << r.sd << ','
       << r.mi << ',' << r.scd << ',' << r.ms_ssim << '\n';
}

} // namespace swinfuse::metrics
