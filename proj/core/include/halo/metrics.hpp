#pragma once

#include "halo/image.hpp"

namespace halo {

// 10 log10(peak^2 / MSE) over all channels; identical images return +inf.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01)^2,
// C2=(0.03)^2 at unit peak, averaged over valid windows; multichannel
// images average the per-channel scores.
double ssim(const Image& a, const Image& b);

// Fraction of non-DC spectral energy at radial frequency above
// cutoff_fraction times the Nyquist rate. Single-channel input; any
// real-valued data is accepted (the DC bin absorbs the mean).
double hf_energy_ratio(const Image& gray, double radial_cutoff_fraction);

}  // namespace halo
