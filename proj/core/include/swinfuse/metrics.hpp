#pragma once

#include "swinfuse/image.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace swinfuse::metrics {

// Fusion-quality indexes. All functions de-normalize [-1,1] planes to the
// 0..255 domain internally and compute in double precision; results are
// deterministic pure functions of their inputs.

// Mean over interior pixels of sqrt((dx^2 + dy^2) / 2), forward differences.
double avg_gradient(const ImagePlane& f);

// sqrt(RF^2 + CF^2); RF/CF are the RMS of horizontal/vertical forward differences.
double spatial_frequency(const ImagePlane& f);

// Population standard deviation of pixel values.
double std_dev(const ImagePlane& f);

// MI(f,a) + MI(f,b) from 256-bin joint histograms, natural log, empty bins skipped.
double mutual_info(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b);

// corr(f-b, a) + corr(f-a, b), Pearson; a zero-variance argument contributes 0.
double scd(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b);

// Multi-scale SSIM with dyadic 2x average-pool downsampling. The luminance
// term enters at the coarsest scale only; a negative contrast term clamps to
// zero before exponentiation. Weights for fewer scales are the leading
// entries renormalized to sum 1.
double ms_ssim(const ImagePlane& f, const ImagePlane& r, int scales = 5);

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MetricReport {
    double ag = 0.0;
    double sf = 0.0;
    double sd = 0.0;
    double mi = 0.0;
    double scd = 0.0;
    double ms_ssim = 0.0;
};

// Full report for a fused image against its two sources. AG/SF/SD are
// measured on the fused image; MS_SSIM is the mean of ms_ssim(f, a) and
// ms_ssim(f, b).
MetricReport evaluate(const ImagePlane& f, const ImagePlane& a, const ImagePlane& b);

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const std::string& name, const MetricReport& r);

} // namespace swinfuse::metrics
