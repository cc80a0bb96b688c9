#pragma once

#include <string>
#include <vector>

#include "evgo/imaging.hpp"

namespace evgo {

// Grayscale or RGB PNG; 16-bit samples unless bit_depth is 8. Values map
// linearly between [0, 1] and the integer sample range.
void write_png(const std::string& path, const Image& image, int bit_depth = 16);
Image read_png(const std::string& path);

// Raw float32 tensor container: 16-byte header (magic "EVGF", then H, W, C as
// little-endian uint32), followed by C planes of H*W row-major float32.
void write_f32(const std::string& path, const std::vector<Eigen::ArrayXXd>& planes);
std::vector<Eigen::ArrayXXd> read_f32(const std::string& path);

}  // namespace evgo
