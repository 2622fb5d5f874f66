#include "swinfuse/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace swinfuse {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

float byte_to_unit(double p) {
    return static_cast<float>(2.0 * p / 255.0 - 1.0);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

ImagePlane load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open image " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for " + path.string());
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<unsigned char> raster(stride * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 i = 0; i < h; ++i) rows[i] = raster.data() + i * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 1 && channels != 3)
        throw IoError("unsupported PNG channel layout in " + path.string());

    ImagePlane plane(static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 i = 0; i < h; ++i) {
        const unsigned char* row = raster.data() + i * stride;
        for (png_uint_32 j = 0; j < w; ++j) {
            double p;
            if (channels == 1) {
                p = row[j];
            } else {
                const unsigned char* px = row + 3 * j;
                p = kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2];
            }
            plane.at(static_cast<int>(i), static_cast<int>(j)) = byte_to_unit(p);
        }
    }
    return plane;
}

void save_png(const ImagePlane& plane, const std::filesystem::path& path,
              const std::vector<unsigned char>& bytes) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot write image " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for " + path.string());
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(plane.width), static_cast<png_uint_32>(plane.height),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < plane.height; ++i)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(i) * plane.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// PGM (binary P5)
// ---------------------------------------------------------------------------

// Reads one whitespace-delimited token, skipping '#' comment lines.
bool next_pnm_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            break;
        }
    }
    if (c == EOF) return false;
    do {
        tok.push_back(static_cast<char>(c));
    } while ((c = in.get()) != EOF && !std::isspace(c));
    return true;
}

ImagePlane load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::string tok;
    if (!next_pnm_token(in, tok) || tok != "P5")
        throw IoError("not a binary PGM (P5): " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        if (!next_pnm_token(in, tok)) throw IoError("");
        w = std::stoi(tok);
        if (!next_pnm_token(in, tok)) throw IoError("");
        h = std::stoi(tok);
        if (!next_pnm_token(in, tok)) throw IoError("");
        maxval = std::stoi(tok);
    } catch (const std::exception&) {
        throw IoError("malformed PGM header in " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw IoError("unsupported PGM header in " + path.string());

    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError("truncated PGM data in " + path.string());

    ImagePlane plane(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        plane.pixels[i] = byte_to_unit(255.0 * bytes[i] / maxval);
    return plane;
}

void save_pgm(const ImagePlane& plane, const std::filesystem::path& path,
              const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image " + path.string());
    out << "P5\n" << plane.width << " " << plane.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image " + path.string());
}

} // namespace

ImagePlane load_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open image " + path.string());
    unsigned char magic[8] = {};
    probe.read(reinterpret_cast<char*>(magic), 8);
    probe.close();

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(magic, png_sig, 8) == 0) return load_png(path);
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path);
    throw IoError("unsupported image format (want PNG or binary PGM): " + path.string());
}

void save_image(const ImagePlane& plane, const std::filesystem::path& path) {
    if (plane.height <= 0 || plane.width <= 0 ||
        plane.pixels.size() != static_cast<std::size_t>(plane.height) * plane.width)
        throw ContractError("save_image: malformed plane");

    // clamp to [-1,1], map to 0..255, round half up
    std::vector<unsigned char> bytes(plane.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double x = std::clamp(static_cast<double>(plane.pixels[i]), -1.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::floor((x + 1.0) / 2.0 * 255.0 + 0.5));
    }

    const std::string ext = path.extension().string();
    if (ext == ".png") save_png(plane, path, bytes);
    else if (ext == ".pgm") save_pgm(plane, path, bytes);
    else throw IoError("unsupported output extension '" + ext + "' (want .png or .pgm): " + path.string());
}

} // namespace swinfuse
