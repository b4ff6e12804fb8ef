#include <png.h>

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hpylori/error.hpp"
#include "hpylori/imaging.hpp"

namespace hpylori {

namespace {

struct PngImage {
    png_image image;
    PngImage() {
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::MissingFile, "cannot open image: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

RasterImage load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorKind::MissingFile, "image not found: " + path.string());
    }
    const auto bytes = read_file(path);

    PngImage png;
    if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
        fail(ErrorKind::MalformedFile,
             "malformed PNG " + path.string() + ": " + png.image.message);
    }
    if (png.image.format & PNG_FORMAT_FLAG_LINEAR) {
        fail(ErrorKind::UnsupportedFormat, "unsupported bit depth (16-bit) in " + path.string());
    }

    png.image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png.image));
    if (!png_image_finish_read(&png.image, nullptr, pixels.data(), 0, nullptr)) {
        fail(ErrorKind::MalformedFile,
             "malformed PNG " + path.string() + ": " + png.image.message);
    }

    std::vector<float> data(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        data[i] = static_cast<float>(pixels[i]) / 255.0f;
    }
    return RasterImage::from_data(static_cast<int>(png.image.width),
                                  static_cast<int>(png.image.height), std::move(data));
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
    if (img.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot save an empty image");
    }
    const auto src = img.data();
    std::vector<unsigned char> pixels(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        pixels[i] = static_cast<unsigned char>(src[i] * 255.0f + 0.5f);
    }

    PngImage png;
    png.image.width = static_cast<png_uint_32>(img.width());
    png.image.height = static_cast<png_uint_32>(img.height());
    png.image.format = PNG_FORMAT_RGB;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!png_image_write_to_file(&png.image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        fail(ErrorKind::Io, "cannot write PNG " + path.string() + ": " + png.image.message);
    }
}

}  // namespace hpylori
