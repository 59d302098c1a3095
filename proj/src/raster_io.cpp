#include "deepsd/raster_io.hpp"

#include <fstream>
#include <iterator>

#include "deepsd/binary.hpp"
#include "deepsd/errors.hpp"

namespace deepsd {

std::vector<std::uint8_t> encode_raster(const GeoGrid& g) {
  std::vector<std::uint8_t> out;
  out.reserve(kRasterHeaderBytes + 4 * g.size());
  binary::put_magic(out, "GRD1");
  binary::put(out, static_cast<std::uint32_t>(g.rows()));
  binary::put(out, static_cast<std::uint32_t>(g.cols()));
  binary::put(out, g.ref().lat0);
  binary::put(out, g.ref().lon0);
  binary::put(out, g.ref().dlat);
  binary::put(out, g.ref().dlon);
  for (double v : g.values()) binary::put(out, static_cast<float>(v));
  return out;
}

GeoGrid decode_raster(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes, "raster");
  in.expect_magic("GRD1");
  const auto rows = in.get<std::uint32_t>();
  const auto cols = in.get<std::uint32_t>();
  GeoRef ref;
  ref.lat0 = in.get<double>();
  ref.lon0 = in.get<double>();
  ref.dlat = in.get<double>();
  ref.dlon = in.get<double>();
  const std::uint64_t cells = std::uint64_t{rows} * cols;
  if (rows == 0 || cols == 0 || cells > kMaxRasterCells) {
    throw ParseError(ParseError::Kind::kDimensionOverflow,
                     "raster: unsupported dims " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  if (in.remaining() < cells * 4) {
    throw ParseError(ParseError::Kind::kTruncated,
                     "raster: truncated payload, header declares " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " but only " +
                         std::to_string(in.remaining() / 4) + " values present");
  }
  if (in.remaining() > cells * 4) {
    throw ParseError(ParseError::Kind::kSyntax, "raster: trailing bytes after payload");
  }
  if (!(ref.dlat > 0.0) || !(ref.dlon > 0.0)) {
    throw ParseError(ParseError::Kind::kSyntax, "raster: non-positive cell spacing");
  }
  std::vector<double> values(cells);
  for (auto& v : values) v = static_cast<double>(in.get<float>());
  return GeoGrid(rows, cols, ref, std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ParseError(ParseError::Kind::kIo, "short write to " + path.string());
}

void write_raster(const GeoGrid& g, const std::filesystem::path& path) {
  write_file_bytes(path, encode_raster(g));
}

GeoGrid read_raster(const std::filesystem::path& path) {
  try {
    return decode_raster(read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace deepsd
