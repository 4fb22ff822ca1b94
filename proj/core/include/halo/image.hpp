#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace halo {

// Dense raster, row-major, channel-interleaved, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }
};

// 8- and 16-bit PNG of 1/2/3/4 channels; values scaled to [0,1].
Image read_png(const std::filesystem::path& path);

// Clamps to [0,1] and quantizes to 8 bits.
void write_png(const std::filesystem::path& path, const Image& img);

// Drops alpha by blending onto a white background; grayscale and rgb pass
// through unchanged.
Image composite_over_white(const Image& img);

// Rec. 601 luminance; single-channel images pass through.
Image to_luminance(const Image& img);

// Channel mean (used where a metric wants one plane from an rgb image).
Image channel_mean(const Image& img);

Image bilinear_resize(const Image& img, int new_width, int new_height);

// Horizontal montage with a 1px separator, used for comparison panels.
Image hstack(const std::vector<Image>& imgs);
Image vstack(const std::vector<Image>& imgs);

// Flat binary sidecar for float maps (depth, occupancy): fixed 8-byte magic,
// version, dims, channel count and a semantic tag, followed by row-major
// little-endian float32 samples.
void write_float_map(const std::filesystem::path& path, const Image& img,
                     std::string_view semantic);

struct FloatMap {
    Image image;
    std::string semantic;
};
FloatMap read_float_map(const std::filesystem::path& path);

}  // namespace halo
