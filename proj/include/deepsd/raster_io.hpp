#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "deepsd/grid.hpp"

namespace deepsd {

/// GRD1 raster layout (little-endian):
///
///   offset  size  field
///   0       4     magic "GRD1"
///   4       4     u32 rows
///   8       4     u32 cols
///   12      8     f64 lat0   (centre of north-west cell)
///   20      8     f64 lon0
///   28      8     f64 dlat
///   36      8     f64 dlon
///   44      4*n   f32 values, row-major, n = rows*cols
///
/// Values are narrowed to f32 on write, so a grid survives read(write(g))
/// bit-exactly only when its values are f32-representable.
inline constexpr std::size_t kRasterHeaderBytes = 44;

/// Largest rows*cols accepted by the decoder.
inline constexpr std::uint64_t kMaxRasterCells = std::uint64_t{1} << 31;

std::vector<std::uint8_t> encode_raster(const GeoGrid& g);
GeoGrid decode_raster(std::span<const std::uint8_t> bytes);

void write_raster(const GeoGrid& g, const std::filesystem::path& path);
GeoGrid read_raster(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace deepsd
