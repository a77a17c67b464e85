#pragma once

#include <filesystem>
#include <string>

#include "eqr/image.hpp"

namespace eqr {

/// Binary NetPBM: P5 (gray, 1 channel) or P6 (RGB, 3 channels). Samples are
/// scaled to [0, 1] by maxval. 16-bit samples are big-endian as per NetPBM.
Image read_netpbm(const std::filesystem::path& path);
Image parse_netpbm(const std::string& bytes);

/// Values are clamped to [0, 1] and rounded onto the maxval grid.
/// maxval must be 255 or 65535.
void write_netpbm(const Image& img, const std::filesystem::path& path, int maxval = 255);
std::string encode_netpbm(const Image& img, int maxval = 255);

}  // namespace eqr
