#include "deepsd/checkpoint.hpp"

#include <string>

#include "deepsd/binary.hpp"
#include "deepsd/raster_io.hpp"

namespace deepsd::nn {

namespace {

constexpr std::uint32_t kMaxDim = 4096;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const SrcnnParams& p) {
  p.validate();
  std::vector<std::uint8_t> out;
  binary::put_magic(out, "SRC1");
  const Architecture& a = p.arch;
  for (std::size_t v : {a.input_channels, a.n1, a.n2, a.f1, a.f2, a.f3}) {
    binary::put(out, static_cast<std::uint32_t>(v));
  }
  binary::put(out, static_cast<std::uint32_t>(p.norm.channels()));
  for (double m : p.norm.mean) binary::put(out, m);
  for (double s : p.norm.std) binary::put(out, s);
  for (const auto t : p.tensors()) {
    for (double v : t) binary::put(out, v);
  }
  return out;
}

SrcnnParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes, "checkpoint");
  in.expect_magic("SRC1");
  std::uint32_t dims[6];
  for (auto& d : dims) {
    d = in.get<std::uint32_t>();
    if (d == 0 || d > kMaxDim) {
      throw ParseError(ParseError::Kind::kDimensionOverflow,
                       "checkpoint: architecture value " + std::to_string(d) + " out of range");
    }
  }
  Architecture a{dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]};
  const auto k = in.get<std::uint32_t>();
  if (k != a.input_channels) {
    throw ParseError(ParseError::Kind::kSyntax,
                     "checkpoint: normalization channel count " + std::to_string(k) +
                         " != input channels " + std::to_string(a.input_channels));
  }
  SrcnnParams p(a);
  for (auto& m : p.norm.mean) m = in.get<double>();
  for (auto& s : p.norm.std) s = in.get<double>();
  for (auto t : p.tensors()) {
    in.need(t.size() * sizeof(double));
    for (double& v : t) v = in.get<double>();
  }
  if (in.remaining() != 0) {
    throw ParseError(ParseError::Kind::kSyntax, "checkpoint: trailing bytes after weights");
  }
  return p;
}

void save_checkpoint(const SrcnnParams& p, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(p));
}

SrcnnParams load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace deepsd::nn
