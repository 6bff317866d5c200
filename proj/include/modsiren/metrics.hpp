#pragma once

#include "modsiren/signal.hpp"

namespace modsiren {

/// Mean over all values of the squared difference.
double mse(const GridSignal& a, const GridSignal& b);

/// 10 log10(peak^2 / mse); +infinity when mse == 0. Throws UsageError for a
/// negative mse or a non-positive peak.
double psnr(double mse, double peak = 1.0);

/// Windowed SSIM with an 11-tap Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03 and dynamic range 1, averaged over all fully contained windows
/// and then over channels. Along an axis shorter than 11 samples the window
/// is cropped to the axis length. Works for any number of axes.
double ssim(const GridSignal& a, const GridSignal& b);

}  // namespace modsiren
