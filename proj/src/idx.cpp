#include "idx.hpp"

#include <fstream>

#include "errors.hpp"

namespace trishare {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_u32_be(std::istream& is, const std::string& path) {
    uint8_t b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        fail(ErrorCode::TruncatedFile, path + " ends inside a header field");
    return static_cast<uint32_t>(b[0]) << 24 | static_cast<uint32_t>(b[1]) << 16 |
           static_cast<uint32_t>(b[2]) << 8 | static_cast<uint32_t>(b[3]);
}

void write_u32_be(std::ostream& os, uint32_t v) {
    for (int i = 3; i >= 0; --i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

RealTensor load_idx_images(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::IoError, "cannot open " + path);
    uint32_t magic = read_u32_be(is, path);
    if (magic != kImagesMagic)
        fail(ErrorCode::BadMagic, path + " is not an IDX image file");
    int64_t count = read_u32_be(is, path);
    int64_t rows = read_u32_be(is, path);
    int64_t cols = read_u32_be(is, path);
    int64_t n = count * rows * cols;
    std::vector<uint8_t> raw(static_cast<size_t>(n));
    if (!is.read(reinterpret_cast<char*>(raw.data()), n))
        fail(ErrorCode::TruncatedFile, path + " ends inside the pixel data");
    RealTensor out = RealTensor::zeros({count, rows, cols});
    for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = raw[static_cast<size_t>(i)] / 255.0;
    return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::IoError, "cannot open " + path);
    uint32_t magic = read_u32_be(is, path);
    if (magic != kLabelsMagic)
        fail(ErrorCode::BadMagic, path + " is not an IDX label file");
    int64_t count = read_u32_be(is, path);
    std::vector<uint8_t> raw(static_cast<size_t>(count));
    if (!is.read(reinterpret_cast<char*>(raw.data()), count))
        fail(ErrorCode::TruncatedFile, path + " ends inside the label data");
    return std::vector<int>(raw.begin(), raw.end());
}

void save_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                     int64_t count, int64_t rows, int64_t cols) {
    if (static_cast<int64_t>(pixels.size()) != count * rows * cols)
        fail(ErrorCode::ShapeMismatch, "pixel count does not match the stated dims");
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::IoError, "cannot write " + path);
    write_u32_be(os, kImagesMagic);
    write_u32_be(os, static_cast<uint32_t>(count));
    write_u32_be(os, static_cast<uint32_t>(rows));
    write_u32_be(os, static_cast<uint32_t>(cols));
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!os) fail(ErrorCode::IoError, "write to " + path + " failed");
}

void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::IoError, "cannot write " + path);
    write_u32_be(os, kLabelsMagic);
    write_u32_be(os, static_cast<uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
    if (!os) fail(ErrorCode::IoError, "write to " + path + " failed");
}

RealTensor flatten_images(const RealTensor& images) {
    if (images.shape.size() != 3)
        fail(ErrorCode::ShapeMismatch, "expected [N, rows, cols] images");
    RealTensor out = images;
    out.shape = {images.shape[0], images.shape[1] * images.shape[2]};
    return out;
}

}  // namespace trishare
