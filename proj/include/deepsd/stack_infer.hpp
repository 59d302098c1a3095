#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepsd/grid.hpp"
#include "deepsd/nn.hpp"
#include "deepsd/series.hpp"

namespace deepsd {

struct StackLevel {
  nn::SrcnnParams params;
  int scale = 2;
  GeoGrid elevation;  // at this level's output lattice
};

/// Independently trained levels ordered coarse -> fine.
struct StackSpec {
  std::vector<StackLevel> levels;

  /// Throws DimensionError/DataError if consecutive lattices do not chain.
  void validate() const;
  int total_scale() const;
  /// Lattice the first level expects as input.
  GeoGrid input_template() const;
};

/// Elevation at each level's output lattice, finest last. Level k of n is
/// coarsened by s^(n-k) from the finest grid.
std::vector<GeoGrid> elevation_pyramid(const GeoGrid& hr_elevation, int levels, int scale);

/// Assembles a stack from checkpoints (coarse -> fine) and the finest
/// elevation grid.
StackSpec make_stack(std::vector<nn::SrcnnParams> checkpoints, const GeoGrid& hr_elevation,
                     int scale);

/// One level: upsample, add elevation, normalise, replication-pad, run the
/// network, denormalise, clamp at zero. Output lattice equals the level's
/// elevation lattice.
GeoGrid infer_level(const StackLevel& level, const GeoGrid& precip);

/// Runs every level in order. `level_nanos`, when given, receives the
/// elapsed steady-clock time of each level (size = level count).
GeoGrid infer(const StackSpec& stack, const GeoGrid& lr_precip,
              std::vector<std::int64_t>* level_nanos = nullptr);

struct StackTiming {
  std::vector<std::int64_t> level_nanos;  // summed over days
  std::int64_t total_nanos = 0;
};

/// Runs the stack over every day with one continuous chain of clock stamps,
/// so the per-level times sum exactly to the total. Outputs are kept in
/// `out` when non-null.
StackTiming benchmark_stack(const StackSpec& stack, const GridSeries& lr, GridSeries* out = nullptr);

GridSeries infer_series(const StackSpec& stack, const GridSeries& lr, unsigned threads = 1);

/// Stack description file (JSON):
///   {"elevation": "<finest elevation .grd>", "scale": 2,
///    "levels": ["<coarsest checkpoint>", ..., "<finest checkpoint>"]}
/// Relative paths are resolved against the file's directory.
StackSpec load_stack(const std::filesystem::path& path);
void write_stack_description(const std::filesystem::path& path,
                             const std::filesystem::path& elevation,
                             const std::vector<std::filesystem::path>& checkpoints, int scale);

}  // namespace deepsd
