#include "deepsd/srcnn_train.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "deepsd/errors.hpp"
#include "deepsd/parallel.hpp"
#include "deepsd/random.hpp"

namespace deepsd {

void LevelConfig::validate() const {
  if (scale < 2) throw DimensionError("level scale must be >= 2");
  if (output_factor < 1) throw DimensionError("output_factor must be >= 1");
  if (stride < 1) throw DimensionError("stride must be >= 1");
  if (batch < 1) throw DimensionError("batch must be >= 1");
  if (sub_image <= arch.shrink()) {
    throw DimensionError("sub-image size " + std::to_string(sub_image) +
                         " must exceed total shrinkage " + std::to_string(arch.shrink()));
  }
  if (arch.shrink() % 2 != 0) throw DimensionError("kernel sizes must give an even shrinkage");
}

LevelConfig level_config_from(const KeyValues& kv, LevelConfig base) {
  static const std::set<std::string> known = {
      "scale", "output_factor", "sub_image", "stride", "batch", "iterations", "seed", "lr_hidden",
      "lr_output", "init_std", "n1", "n2", "f1", "f2", "f3", "threads"};
  for (const auto& [k, v] : kv) {
    if (!known.contains(k)) throw ParseError(ParseError::Kind::kSyntax, "unknown level config key: " + k);
  }
  const auto uint_of = [&](const char* key, std::size_t fallback) {
    const long long v = kv_int(kv, key, static_cast<long long>(fallback));
    if (v < 0) throw ParseError(ParseError::Kind::kSyntax, std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  LevelConfig c = base;
  c.scale = static_cast<int>(kv_int(kv, "scale", c.scale));
  c.output_factor = static_cast<int>(kv_int(kv, "output_factor", c.output_factor));
  c.sub_image = uint_of("sub_image", c.sub_image);
  c.stride = uint_of("stride", c.stride);
  c.batch = uint_of("batch", c.batch);
  c.iterations = uint_of("iterations", c.iterations);
  c.seed = uint_of("seed", c.seed);
  c.lr_hidden = kv_double(kv, "lr_hidden", c.lr_hidden);
  c.lr_output = kv_double(kv, "lr_output", c.lr_output);
  c.init_std = kv_double(kv, "init_std", c.init_std);
  c.arch.n1 = uint_of("n1", c.arch.n1);
  c.arch.n2 = uint_of("n2", c.arch.n2);
  c.arch.f1 = uint_of("f1", c.arch.f1);
  c.arch.f2 = uint_of("f2", c.arch.f2);
  c.arch.f3 = uint_of("f3", c.arch.f3);
  c.threads = static_cast<unsigned>(uint_of("threads", c.threads));
  c.validate();
  return c;
}

TrainPair TrainingSet::pair(std::size_t i) const {
  const Window& w = windows.at(i);
  const ChannelStack& day = inputs[w.day];
  std::vector<GeoGrid> chans;
  for (std::size_t c = 0; c < day.channels(); ++c) {
    chans.push_back(day[c].window(w.row, w.col, sub_image, sub_image));
  }
  const std::size_t inner = sub_image - 2 * margin;
  return {ChannelStack(std::move(chans), day.roles()),
          labels[w.day].window(w.row + margin, w.col + margin, inner, inner)};
}

void TrainingSet::fill_input(std::size_t i, nn::Tensor3& out) const {
  const Window& w = windows[i];
  const ChannelStack& day = inputs[w.day];
  if (out.channels != day.channels() || out.height != sub_image || out.width != sub_image) {
    out = nn::Tensor3(day.channels(), sub_image, sub_image);
  }
  for (std::size_t c = 0; c < day.channels(); ++c) {
    const GeoGrid& g = day[c];
    for (std::size_t r = 0; r < sub_image; ++r) {
      const double* src = &g.values()[(w.row + r) * g.cols() + w.col];
      std::copy_n(src, sub_image, &out(c, r, 0));
    }
  }
}

void TrainingSet::fill_label(std::size_t i, nn::Tensor3& out) const {
  const Window& w = windows[i];
  const GeoGrid& g = labels[w.day];
  const std::size_t inner = sub_image - 2 * margin;
  if (out.channels != 1 || out.height != inner || out.width != inner) {
    out = nn::Tensor3(1, inner, inner);
  }
  for (std::size_t r = 0; r < inner; ++r) {
    const double* src = &g.values()[(w.row + margin + r) * g.cols() + w.col + margin];
    std::copy_n(src, inner, &out(0, r, 0));
  }
}

namespace {

// Weighted population statistics where each pixel counts once per window
// covering it, i.e. statistics of the extracted sub-images themselves.
NormStats window_stats(const std::vector<ChannelStack>& days, const std::vector<double>& coverage) {
  const std::size_t channels = days.front().channels();
  NormStats stats;
  double weight = 0.0;
  for (double c : coverage) weight += c;
  weight *= static_cast<double>(days.size());
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double sum = 0.0;
    for (const auto& d : days) {
      const auto v = d[ch].values();
      for (std::size_t i = 0; i < v.size(); ++i) sum += coverage[i] * v[i];
    }
    const double mean = sum / weight;
    double ss = 0.0;
    for (const auto& d : days) {
      const auto v = d[ch].values();
      for (std::size_t i = 0; i < v.size(); ++i) ss += coverage[i] * (v[i] - mean) * (v[i] - mean);
    }
    stats.mean.push_back(mean);
    stats.std.push_back(std::max(std::sqrt(ss / weight), NormStats::kStdFloor));
  }
  return stats;
}

}  // namespace

TrainingSet make_training_pairs(const GridSeries& hr_precip, const GeoGrid& hr_elevation,
                                const LevelConfig& cfg, const NormStats* stats) {
  cfg.validate();
  hr_precip.validate();
  if (hr_precip.empty()) throw DataError("no days to build training pairs from");
  const GeoGrid& first = hr_precip.days.front();
  if (!first.same_shape(hr_elevation)) {
    throw DimensionError("precipitation and elevation lattices differ");
  }
  const auto in_factor = static_cast<std::size_t>(cfg.output_factor * cfg.scale);
  if (first.rows() % in_factor != 0 || first.cols() % in_factor != 0) {
    throw DimensionError("grid " + std::to_string(first.rows()) + "x" +
                         std::to_string(first.cols()) + " not divisible by input factor " +
                         std::to_string(in_factor));
  }

  const GeoGrid elevation =
      cfg.output_factor > 1 ? coarsen(hr_elevation, cfg.output_factor) : hr_elevation;
  std::vector<ChannelStack> raw(hr_precip.size());
  std::vector<GeoGrid> labels(hr_precip.size());
  parallel_for(hr_precip.size(), cfg.threads, [&](std::size_t d) {
    const GeoGrid& hr = hr_precip.days[d];
    labels[d] = cfg.output_factor > 1 ? coarsen(hr, cfg.output_factor) : hr;
    GeoGrid interp = bicubic_upsample(coarsen(hr, static_cast<int>(in_factor)), cfg.scale);
    raw[d] = ChannelStack({std::move(interp), elevation}, {"precip", "elevation"});
  });

  const std::size_t rows = elevation.rows();
  const std::size_t cols = elevation.cols();
  const std::size_t nr = window_count(rows, cfg.sub_image, cfg.stride);
  const std::size_t nc = window_count(cols, cfg.sub_image, cfg.stride);
  if (nr == 0 || nc == 0) {
    throw DimensionError("lattice " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " smaller than sub-image " + std::to_string(cfg.sub_image));
  }

  TrainingSet set;
  set.sub_image = cfg.sub_image;
  set.margin = cfg.crop_margin();
  if (stats) {
    if (stats->channels() != 2) throw DimensionError("expected 2-channel normalization stats");
    set.stats = *stats;
  } else {
    std::vector<double> coverage(rows * cols, 0.0);
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) {
        for (std::size_t r = 0; r < cfg.sub_image; ++r) {
          for (std::size_t c = 0; c < cfg.sub_image; ++c) {
            coverage[(i * cfg.stride + r) * cols + j * cfg.stride + c] += 1.0;
          }
        }
      }
    }
    set.stats = window_stats(raw, coverage);
  }

  set.inputs.resize(raw.size());
  set.labels.resize(raw.size());
  parallel_for(raw.size(), cfg.threads, [&](std::size_t d) {
    set.inputs[d] = normalize(raw[d], set.stats);
    set.labels[d] = normalize_channel(labels[d], set.stats, 0);
  });
  for (std::size_t d = 0; d < raw.size(); ++d) {
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) set.windows.push_back({d, i * cfg.stride, j * cfg.stride});
    }
  }
  return set;
}

namespace {

struct SampleResult {
  nn::Gradients grads;
  double loss = 0.0;
};

SampleResult sample_gradient(const nn::SrcnnParams& p, const TrainingSet& set, std::size_t index) {
  nn::Tensor3 x, y;
  set.fill_input(index, x);
  set.fill_label(index, y);
  nn::ForwardCache cache;
  const nn::Tensor3 pred = nn::forward(p, x, &cache);
  const nn::LossResult loss = nn::mse_loss(pred, y);
  return {nn::backward(p, x, loss.grad, cache, false), loss.loss};
}

}  // namespace

TrainResult train_level(const TrainingSet& set, const LevelConfig& cfg,
                        const std::function<void(std::size_t, double)>& on_iteration) {
  cfg.validate();
  if (set.size() == 0) throw DataError("training set is empty");
  if (set.sub_image != cfg.sub_image || set.margin != cfg.crop_margin()) {
    throw DimensionError("training set geometry does not match level config");
  }

  TrainResult result;
  nn::Architecture arch = cfg.arch;
  arch.input_channels = set.inputs.front().channels();
  result.params = nn::init_params(cfg.seed, arch, cfg.init_std);
  result.params.norm = set.stats;
  nn::AdamState adam = nn::AdamState::for_params(result.params);
  adam.layer_lr = {cfg.lr_hidden, cfg.lr_hidden, cfg.lr_output};

  Rng rng(cfg.seed, 0xba7c4);
  std::vector<std::size_t> batch(cfg.batch);
  std::vector<SampleResult> samples(cfg.batch);
  result.loss_curve.reserve(cfg.iterations);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    for (auto& b : batch) b = static_cast<std::size_t>(rng.below(set.size()));
    parallel_for(batch.size(), cfg.threads, [&](std::size_t k) {
      samples[k] = sample_gradient(result.params, set, batch[k]);
    });
    // Fixed reduction order keeps the step independent of the thread count.
    nn::Gradients total = std::move(samples[0].grads);
    double loss = samples[0].loss;
    for (std::size_t k = 1; k < samples.size(); ++k) {
      total += samples[k].grads;
      loss += samples[k].loss;
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) {
      throw DivergenceError(it, "training diverged: non-finite loss at iteration " +
                                    std::to_string(it));
    }
    total *= inv_batch;
    nn::adam_step(result.params, total, adam);
    result.loss_curve.push_back(loss);
    if (on_iteration) on_iteration(it, loss);
  }
  return result;
}

double evaluate_loss(const nn::SrcnnParams& p, const TrainingSet& set, unsigned threads) {
  if (set.size() == 0) throw DataError("evaluation set is empty");
  std::vector<double> losses(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    nn::Tensor3 x, y;
    set.fill_input(i, x);
    set.fill_label(i, y);
    losses[i] = nn::mse_loss(nn::forward(p, x), y).loss;
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

PairRmse evaluate_rmse(const nn::SrcnnParams& p, const TrainingSet& set, unsigned threads) {
  if (set.size() == 0) throw DataError("evaluation set is empty");
  const double mean = set.stats.mean[0];
  const double sd = set.stats.std[0];
  std::vector<std::array<double, 2>> sse(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    nn::Tensor3 x, y;
    set.fill_input(i, x);
    set.fill_label(i, y);
    const nn::Tensor3 pred = nn::forward(p, x);
    double net = 0.0, cubic = 0.0;
    for (std::size_t r = 0; r < y.height; ++r) {
      for (std::size_t c = 0; c < y.width; ++c) {
        const double truth = y(0, r, c) * sd + mean;
        const double out = std::max(0.0, pred(0, r, c) * sd + mean);
        const double interp = std::max(0.0, x(0, r + set.margin, c + set.margin) * sd + mean);
        net += (out - truth) * (out - truth);
        cubic += (interp - truth) * (interp - truth);
      }
    }
    sse[i] = {net, cubic};
  });
  double net = 0.0, cubic = 0.0;
  for (const auto& s : sse) {
    net += s[0];
    cubic += s[1];
  }
  const std::size_t inner = set.sub_image - 2 * set.margin;
  const double n = static_cast<double>(set.size() * inner * inner);
  return {std::sqrt(net / n), std::sqrt(cubic / n)};
}

void write_loss_curve(const std::vector<double>& curve, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, curve[i]);
    f << buf;
  }
}

}  // namespace deepsd
