#include "halo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace halo {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw std::runtime_error(path.string() + ": " + what);
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(path, "cannot open for reading");

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail(path, "not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt PNG data");
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // little-endian reads below
    png_read_update_info(png, info);

    bit_depth = png_get_bit_depth(png, info);
    int chans = png_get_channels(png, info);
    std::size_t rowbytes = png_get_rowbytes(png, info);

    std::vector<png_byte> buffer(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(w), static_cast<int>(h), chans);
    const double scale = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    std::size_t idx = 0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = buffer.data() + y * rowbytes;
        if (bit_depth == 16) {
            const std::uint16_t* r16 = reinterpret_cast<const std::uint16_t*>(row);
            for (std::size_t i = 0; i < w * static_cast<std::size_t>(chans); ++i)
                img.data[idx++] = r16[i] * scale;
        } else {
            for (std::size_t i = 0; i < w * static_cast<std::size_t>(chans); ++i)
                img.data[idx++] = row[i] * scale;
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0 || img.channels < 1 || img.channels > 4)
        throw std::invalid_argument("write_png: unsupported image shape");

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG write error");
    }

    static const int color_types[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                      PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGB_ALPHA};
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, color_types[img.channels - 1],
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image composite_over_white(const Image& img) {
    if (img.channels != 2 && img.channels != 4) return img;
    const int out_c = img.channels == 2 ? 1 : 3;
    Image out(img.width, img.height, out_c);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double a = img.at(x, y, out_c);
            for (int c = 0; c < out_c; ++c)
                out.at(x, y, c) = img.at(x, y, c) * a + (1.0 - a);
        }
    return out;
}

Image to_luminance(const Image& img) {
    if (img.channels == 1) return img;
    const Image rgb = composite_over_white(img);
    if (rgb.channels == 1) return rgb;
    Image out(rgb.width, rgb.height, 1);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x)
            out.at(x, y, 0) = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) +
                              0.114 * rgb.at(x, y, 2);
    return out;
}

Image channel_mean(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0;
            for (int c = 0; c < img.channels; ++c) s += img.at(x, y, c);
            out.at(x, y, 0) = s / img.channels;
        }
    return out;
}

Image bilinear_resize(const Image& img, int new_width, int new_height) {
    if (new_width <= 0 || new_height <= 0)
        throw std::invalid_argument("bilinear_resize: non-positive target size");
    Image out(new_width, new_height, img.channels);
    const double sx = static_cast<double>(img.width) / new_width;
    const double sy = static_cast<double>(img.height) / new_height;
    for (int y = 0; y < new_height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, img.height - 1);
        int y1c = std::clamp(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < new_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, img.width - 1);
            int x1c = std::clamp(x0 + 1, 0, img.width - 1);
            for (int c = 0; c < img.channels; ++c) {
                double v00 = img.at(x0c, y0c, c), v10 = img.at(x1c, y0c, c);
                double v01 = img.at(x0c, y1c, c), v11 = img.at(x1c, y1c, c);
                out.at(x, y, c) = (1 - wy) * ((1 - wx) * v00 + wx * v10) +
                                  wy * ((1 - wx) * v01 + wx * v11);
            }
        }
    }
    return out;
}

namespace {

Image stack(const std::vector<Image>& imgs, bool horizontal) {
    if (imgs.empty()) throw std::invalid_argument("stack: no images");
    const int chans = imgs.front().channels;
    int w = 0, h = 0;
    for (const auto& im : imgs) {
        if (im.channels != chans) throw std::invalid_argument("stack: channel mismatch");
        if (horizontal) {
            w += im.width;
            h = std::max(h, im.height);
        } else {
            w = std::max(w, im.width);
            h += im.height;
        }
    }
    const int sep = static_cast<int>(imgs.size()) - 1;
    Image out(horizontal ? w + sep : w, horizontal ? h : h + sep, chans, 0.5);
    int off = 0;
    for (const auto& im : imgs) {
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                for (int c = 0; c < chans; ++c) {
                    if (horizontal)
                        out.at(off + x, y, c) = im.at(x, y, c);
                    else
                        out.at(x, off + y, c) = im.at(x, y, c);
                }
        off += (horizontal ? im.width : im.height) + 1;
    }
    return out;
}

}  // namespace

Image hstack(const std::vector<Image>& imgs) { return stack(imgs, true); }
Image vstack(const std::vector<Image>& imgs) { return stack(imgs, false); }

namespace {
constexpr char kMapMagic[8] = {'H', 'A', 'L', 'O', 'M', 'A', 'P', '1'};
constexpr std::size_t kSemanticBytes = 16;
}  // namespace

void write_float_map(const std::filesystem::path& path, const Image& img,
                     std::string_view semantic) {
    if (semantic.size() >= kSemanticBytes)
        throw std::invalid_argument("write_float_map: semantic tag too long");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out.write(kMapMagic, sizeof(kMapMagic));
    std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.width),
                             static_cast<std::uint32_t>(img.height),
                             static_cast<std::uint32_t>(img.channels)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    char tag[kSemanticBytes] = {};
    std::memcpy(tag, semantic.data(), semantic.size());
    out.write(tag, sizeof(tag));
    std::vector<float> packed(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        packed[i] = static_cast<float>(img.data[i]);
    out.write(reinterpret_cast<const char*>(packed.data()),
              static_cast<std::streamsize>(packed.size() * sizeof(float)));
    if (!out) fail(path, "short write");
}

FloatMap read_float_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open for reading");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMapMagic, sizeof(kMapMagic)) != 0)
        fail(path, "not a float map file");
    std::uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    char tag[kSemanticBytes];
    in.read(tag, sizeof(tag));
    if (!in) fail(path, "truncated header");

    FloatMap result;
    result.semantic.assign(tag, strnlen(tag, kSemanticBytes));
    result.image = Image(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                         static_cast<int>(dims[2]));
    std::vector<float> packed(result.image.data.size());
    in.read(reinterpret_cast<char*>(packed.data()),
            static_cast<std::streamsize>(packed.size() * sizeof(float)));
    if (!in) fail(path, "truncated payload");
    for (std::size_t i = 0; i < packed.size(); ++i)
        result.image.data[i] = packed[i];
    return result;
}

}  // namespace halo
