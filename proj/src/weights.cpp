#include "weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trishare {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'W', '1'};

uint64_t payload_offset(const WeightsMap& w, const std::string& upto) {
    uint64_t off = 0;
    for (const auto& [name, t] : w) {
        if (name == upto) return off;
        off += static_cast<uint64_t>(t.numel()) * 8;
    }
    return off;
}

void write_f64_le(std::ostream& os, const std::vector<double>& vals) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * 8));
    } else {
        for (double v : vals) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
}

uint32_t read_u32(std::istream& is) {
    uint8_t b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        fail(ErrorCode::TruncatedFile, "weights file ends inside a header field");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::istream& is) {
    uint64_t lo = read_u32(is);
    return lo | static_cast<uint64_t>(read_u32(is)) << 32;
}

}  // namespace

std::string weights_manifest(const WeightsMap& weights) {
    std::ostringstream m;
    for (const auto& [name, t] : weights) {
        m << name << " f64 " << t.shape.size();
        for (int64_t d : t.shape) m << " " << d;
        m << " " << payload_offset(weights, name) << "\n";
    }
    return m.str();
}

void save_weights(const std::string& path, const WeightsMap& weights) {
    for (const auto& [name, t] : weights)
        if (name.find_first_of(" \n") != std::string::npos)
            fail(ErrorCode::InvalidArgument, "weight name '" + name + "' contains whitespace");
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::IoError, "cannot write " + path);
    std::string manifest = weights_manifest(weights);
    os.write(kMagic, 4);
    uint32_t mlen = static_cast<uint32_t>(manifest.size());
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((mlen >> (8 * i)) & 0xff));
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    uint64_t plen = 0;
    for (const auto& [name, t] : weights) plen += static_cast<uint64_t>(t.numel()) * 8;
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((plen >> (8 * i)) & 0xff));
    for (const auto& [name, t] : weights) write_f64_le(os, t.data);
    if (!os) fail(ErrorCode::IoError, "write to " + path + " failed");
}

WeightsMap load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::IoError, "cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4)) fail(ErrorCode::TruncatedFile, path + " shorter than its magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        fail(ErrorCode::BadMagic, path + " is not a weights container");
    uint32_t mlen = read_u32(is);
    std::string manifest(mlen, '\0');
    if (!is.read(manifest.data(), mlen))
        fail(ErrorCode::TruncatedFile, path + " ends inside the manifest");
    uint64_t plen = read_u64(is);
    std::string payload(plen, '\0');
    if (!is.read(payload.data(), static_cast<std::streamsize>(plen)))
        fail(ErrorCode::TruncatedFile, path + " ends inside the payload");

    WeightsMap out;
    std::istringstream ms(manifest);
    std::string line;
    std::vector<std::pair<uint64_t, uint64_t>> spans;  // offset, bytes
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, dtype;
        size_t rank = 0;
        if (!(ls >> name >> dtype >> rank) || dtype != "f64")
            fail(ErrorCode::BadMagic, "unreadable manifest line: " + line);
        Shape shape(rank);
        for (size_t i = 0; i < rank; ++i)
            if (!(ls >> shape[i])) fail(ErrorCode::BadMagic, "manifest dims missing: " + line);
        uint64_t offset = 0;
        if (!(ls >> offset)) fail(ErrorCode::BadMagic, "manifest offset missing: " + line);
        uint64_t bytes = static_cast<uint64_t>(shape_numel(shape)) * 8;
        if (offset % 8 != 0 || offset + bytes > plen)
            fail(ErrorCode::TruncatedFile, name + " extends past the payload");
        for (const auto& [o, b] : spans)
            if (offset < o + b && o < offset + bytes)
                fail(ErrorCode::BadMagic, "overlapping manifest entries at " + name);
        spans.push_back({offset, bytes});
        RealTensor t = RealTensor::zeros(shape);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(t.data.data(), payload.data() + offset, bytes);
        } else {
            for (int64_t i = 0; i < t.numel(); ++i) {
                uint64_t bits = 0;
                for (int k = 0; k < 8; ++k)
                    bits |= static_cast<uint64_t>(
                                static_cast<uint8_t>(payload[offset + i * 8 + k]))
                            << (8 * k);
                std::memcpy(&t.data[i], &bits, 8);
            }
        }
        out[name] = std::move(t);
    }
    return out;
}

}  // namespace trishare
