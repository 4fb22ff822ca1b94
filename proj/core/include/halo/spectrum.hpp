#pragma once

#include <Eigen/Core>

#include "halo/image.hpp"

namespace halo {

// Full 2-D DFT magnitude spectrum of a single-channel image, normalized by
// the pixel count so the DC bin equals the image mean. Row r / column c of
// the result corresponds to vertical / horizontal frequency index.
Eigen::ArrayXXd dft_magnitude(const Image& gray);

// Signed frequency of bin i out of n, in cycles per sample, in [-0.5, 0.5).
double bin_frequency(int i, int n);

}  // namespace halo
