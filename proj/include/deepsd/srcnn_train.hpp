#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "deepsd/config.hpp"
#include "deepsd/grid.hpp"
#include "deepsd/nn.hpp"
#include "deepsd/series.hpp"

namespace deepsd {

/// Configuration of one stack level. `output_factor` is the coarsening from
/// the finest (observation) lattice to this level's output lattice; the
/// input lattice is `output_factor * scale` times coarser.
struct LevelConfig {
  int scale = 2;
  int output_factor = 1;
  std::size_t sub_image = 51;
  std::size_t stride = 20;
  std::size_t batch = 200;
  std::size_t iterations = 30000;
  std::uint64_t seed = 0;
  double lr_hidden = 1e-4;  // layers 1 and 2
  double lr_output = 1e-5;  // layer 3
  double init_std = 1e-3;
  nn::Architecture arch;
  unsigned threads = 1;

  void validate() const;

  double output_resolution(double finest_deg) const { return finest_deg * output_factor; }
  double input_resolution(double finest_deg) const {
    return finest_deg * output_factor * scale;
  }
  std::size_t crop_margin() const { return arch.shrink() / 2; }
};

/// Overrides `base` with recognised keys: scale, output_factor, sub_image,
/// stride, batch, iterations, seed, lr_hidden, lr_output, init_std, n1, n2,
/// f1, f2, f3, threads. Unknown keys are rejected.
LevelConfig level_config_from(const KeyValues& kv, LevelConfig base = {});

/// Number of sliding-window positions along an axis.
constexpr std::size_t window_count(std::size_t extent, std::size_t size, std::size_t stride) {
  return extent < size ? 0 : (extent - size) / stride + 1;
}

/// One training example: a normalised input sub-image and its centre-cropped
/// normalised label.
struct TrainPair {
  ChannelStack input;
  GeoGrid label;
};

struct Window {
  std::size_t day = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

/// All sub-images of a set of days. Whole normalised days are kept once and
/// windows reference them, so `pair(i)` materialises example i on demand.
struct TrainingSet {
  std::vector<ChannelStack> inputs;  // normalised [precip, elevation] per day
  std::vector<GeoGrid> labels;       // normalised target per day, full lattice
  std::vector<Window> windows;
  NormStats stats;
  std::size_t sub_image = 0;
  std::size_t margin = 0;

  std::size_t size() const noexcept { return windows.size(); }
  TrainPair pair(std::size_t i) const;
  void fill_input(std::size_t i, nn::Tensor3& out) const;
  void fill_label(std::size_t i, nn::Tensor3& out) const;
};

/// Builds examples for one level. When `stats` is null the normalisation is
/// fitted over the extracted windows of these days (the training split);
/// otherwise the given statistics are applied (validation/test splits).
TrainingSet make_training_pairs(const GridSeries& hr_precip, const GeoGrid& hr_elevation,
                                const LevelConfig& cfg, const NormStats* stats = nullptr);

struct TrainResult {
  nn::SrcnnParams params;
  std::vector<double> loss_curve;  // batch loss at each iteration, before its update
};

/// Adam minimisation of the batch-mean squared error over uniformly sampled
/// (with replacement) windows. Throws DivergenceError on a non-finite loss.
/// `on_iteration(it, loss)` is called after every step when set.
TrainResult train_level(const TrainingSet& set, const LevelConfig& cfg,
                        const std::function<void(std::size_t, double)>& on_iteration = {});

/// Mean per-example loss in normalised units.
double evaluate_loss(const nn::SrcnnParams& p, const TrainingSet& set, unsigned threads = 1);

/// RMSE in physical units (denormalised with the precipitation statistics)
/// of the network and of the interpolated input itself over the same windows.
struct PairRmse {
  double network = 0.0;
  double bicubic = 0.0;
};
PairRmse evaluate_rmse(const nn::SrcnnParams& p, const TrainingSet& set, unsigned threads = 1);

/// "iteration,loss" header followed by one row per iteration.
void write_loss_curve(const std::vector<double>& curve, const std::filesystem::path& path);

}  // namespace deepsd
