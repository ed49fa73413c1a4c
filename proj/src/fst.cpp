#include "fringelab/fst.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace fringelab {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

Image FstData::channel(int c) const {
    Image img(static_cast<int>(width), static_cast<int>(height));
    std::memcpy(img.v.data(), data.data() + static_cast<size_t>(c) * plane_size(),
                plane_size() * sizeof(double));
    return img;
}

void write_fst(const std::string& path, const FstData& d) {
    const size_t n = static_cast<size_t>(d.channels) * d.height * d.width;
    require(d.data.size() == n, "write_fst: payload length mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_fst: cannot open " + path);
    os.write("FST1", 4);
    put_u32(os, d.channels);
    put_u32(os, d.height);
    put_u32(os, d.width);
    put_u32(os, static_cast<uint32_t>(d.dtype));
    if (d.dtype == FstDtype::f32) {
        std::vector<float> buf(n);
        for (size_t i = 0; i < n; i++) buf[i] = static_cast<float>(d.data[i]);
        os.write(reinterpret_cast<const char*>(buf.data()), n * sizeof(float));
    } else {
        os.write(reinterpret_cast<const char*>(d.data.data()), n * sizeof(double));
    }
    if (!os) throw std::runtime_error("write_fst: write failed for " + path);
}

FstData read_fst(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingPrereqError("read_fst: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FST1", 4) != 0)
        throw std::runtime_error("read_fst: bad magic in " + path);
    FstData d;
    d.channels = get_u32(is);
    d.height = get_u32(is);
    d.width = get_u32(is);
    uint32_t dt = get_u32(is);
    if (dt > 1) throw std::runtime_error("read_fst: unknown dtype in " + path);
    d.dtype = static_cast<FstDtype>(dt);
    const size_t n = static_cast<size_t>(d.channels) * d.height * d.width;
    d.data.resize(n);
    if (d.dtype == FstDtype::f32) {
        std::vector<float> buf(n);
        is.read(reinterpret_cast<char*>(buf.data()), n * sizeof(float));
        for (size_t i = 0; i < n; i++) d.data[i] = static_cast<double>(buf[i]);
    } else {
        is.read(reinterpret_cast<char*>(d.data.data()), n * sizeof(double));
    }
    if (!is) throw std::runtime_error("read_fst: truncated payload in " + path);
    return d;
}

FstData fst_from_images(const std::vector<Image>& images, FstDtype dtype) {
    require(!images.empty(), "fst_from_images: no images");
    FstData d;
    d.channels = static_cast<uint32_t>(images.size());
    d.height = static_cast<uint32_t>(images[0].height);
    d.width = static_cast<uint32_t>(images[0].width);
    d.dtype = dtype;
    d.data.reserve(static_cast<size_t>(d.channels) * d.plane_size());
    for (const auto& img : images) {
        require(img.width == images[0].width && img.height == images[0].height,
                "fst_from_images: mismatched dimensions");
        d.data.insert(d.data.end(), img.v.begin(), img.v.end());
    }
    return d;
}

std::vector<Image> fst_to_images(const FstData& d) {
    std::vector<Image> out;
    out.reserve(d.channels);
    for (uint32_t c = 0; c < d.channels; c++) out.push_back(d.channel(static_cast<int>(c)));
    return out;
}

void write_pgm8(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm8: cannot open " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int y = 0; y < img.height; y++) {
        for (int x = 0; x < img.width; x++) {
            double v = img.at(y, x);
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            row[x] = static_cast<unsigned char>(v * 255.0 + 0.5);
        }
        os.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

void write_pgm16(const std::string& path, const Image& img, double lo, double hi) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm16: cannot open " + path);
    os << "P5\n" << img.width << " " << img.height << "\n65535\n";
    const double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 2);
    for (int y = 0; y < img.height; y++) {
        for (int x = 0; x < img.width; x++) {
            double v = (img.at(y, x) - lo) * scale;
            v = v < 0.0 ? 0.0 : (v > 65535.0 ? 65535.0 : v);
            uint16_t q = static_cast<uint16_t>(v + 0.5);
            row[2 * x] = static_cast<unsigned char>(q >> 8);  // big-endian per PGM
            row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
        }
        os.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

void write_ply(const std::string& path, const std::vector<double>& xyz,
               const std::vector<uint8_t>& valid) {
    require(xyz.size() == valid.size() * 3, "write_ply: size mismatch");
    size_t count = 0;
    for (uint8_t m : valid) count += m ? 1 : 0;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_ply: cannot open " + path);
    os << "ply\nformat ascii 1.0\nelement vertex " << count
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    char line[96];
    for (size_t i = 0; i < valid.size(); i++) {
        if (!valid[i]) continue;
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f\n", xyz[3 * i], xyz[3 * i + 1],
                      xyz[3 * i + 2]);
        os << line;
    }
}

}  // namespace fringelab
