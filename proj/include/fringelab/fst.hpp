#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fringelab/common.hpp"

namespace fringelab {

// FST container: magic "FST1", then u32 little-endian channels/height/width/
// dtype (0 = f32, 1 = f64), then the payload row-major, channel-major.
enum class FstDtype : uint32_t { f32 = 0, f64 = 1 };

struct FstData {
    uint32_t channels = 0;
    uint32_t height = 0;
    uint32_t width = 0;
    FstDtype dtype = FstDtype::f32;
    std::vector<double> data;  // channels*height*width, widened on read

    size_t plane_size() const { return static_cast<size_t>(height) * width; }
    Image channel(int c) const;
};

void write_fst(const std::string& path, const FstData& d);
FstData read_fst(const std::string& path);

FstData fst_from_images(const std::vector<Image>& images, FstDtype dtype);
std::vector<Image> fst_to_images(const FstData& d);

// Preview rasters. 8-bit P5 for intensities in [0,1]; 16-bit P5 for signed
// fields (phase maps), mapped linearly from [lo, hi].
void write_pgm8(const std::string& path, const Image& img);
void write_pgm16(const std::string& path, const Image& img, double lo, double hi);

// ASCII point cloud: "x y z" per valid pixel.
void write_ply(const std::string& path, const std::vector<double>& xyz,
               const std::vector<uint8_t>& valid);

}  // namespace fringelab
