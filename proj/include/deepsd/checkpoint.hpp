#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "deepsd/nn.hpp"

namespace deepsd::nn {

/// SRC1 checkpoint layout (little-endian):
///
///   magic "SRC1"
///   u32 c, n1, n2, f1, f2, f3
///   u32 k                       normalisation channel count (must equal c)
///   f64 mean[k], f64 std[k]
///   f64 W1[n1*c*f1*f1], f64 b1[n1]
///   f64 W2[n2*n1*f2*f2], f64 b2[n2]
///   f64 W3[1*n2*f3*f3],  f64 b3[1]
///
/// Weight arrays are [out][in][ky][kx]. Doubles are stored verbatim, so
/// encode/decode round trips are bit-exact.
std::vector<std::uint8_t> encode_checkpoint(const SrcnnParams& p);
SrcnnParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const SrcnnParams& p, const std::filesystem::path& path);
SrcnnParams load_checkpoint(const std::filesystem::path& path);

}  // namespace deepsd::nn
