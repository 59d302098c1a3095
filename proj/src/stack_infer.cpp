#include "deepsd/stack_infer.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <json.hpp>

#include "deepsd/checkpoint.hpp"
#include "deepsd/errors.hpp"
#include "deepsd/raster_io.hpp"

namespace deepsd {

void StackSpec::validate() const {
  if (levels.empty()) throw DataError("stack has no levels");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const StackLevel& l = levels[k];
    l.params.validate();
    if (l.scale < 2) throw DimensionError("level scale must be >= 2");
    if (l.params.arch.input_channels != 2) {
      throw DataError("level " + std::to_string(k + 1) + " checkpoint expects " +
                      std::to_string(l.params.arch.input_channels) +
                      " channels; stack levels take precipitation + elevation");
    }
    if (l.params.arch.shrink() % 2 != 0) throw DimensionError("odd total shrinkage");
    if (l.elevation.rows() % static_cast<std::size_t>(l.scale) != 0 ||
        l.elevation.cols() % static_cast<std::size_t>(l.scale) != 0) {
      throw DimensionError("level " + std::to_string(k + 1) + " elevation not divisible by scale");
    }
    if (k + 1 < levels.size()) {
      const GeoGrid next_in = coarsen(levels[k + 1].elevation, levels[k + 1].scale);
      if (!next_in.same_shape(l.elevation) || !next_in.ref().matches(l.elevation.ref())) {
        throw DataError("level " + std::to_string(k + 1) + " output lattice does not match level " +
                        std::to_string(k + 2) + " input lattice");
      }
    }
  }
}

int StackSpec::total_scale() const {
  int s = 1;
  for (const auto& l : levels) s *= l.scale;
  return s;
}

GeoGrid StackSpec::input_template() const {
  if (levels.empty()) throw DataError("stack has no levels");
  return coarsen(levels.front().elevation, levels.front().scale);
}

std::vector<GeoGrid> elevation_pyramid(const GeoGrid& hr_elevation, int levels, int scale) {
  if (levels < 1) throw DimensionError("pyramid needs at least one level");
  if (scale < 2) throw DimensionError("pyramid scale must be >= 2");
  std::size_t total = 1;
  for (int i = 0; i < levels; ++i) total *= static_cast<std::size_t>(scale);
  if (hr_elevation.rows() % total != 0 || hr_elevation.cols() % total != 0) {
    throw DimensionError("elevation " + std::to_string(hr_elevation.rows()) + "x" +
                         std::to_string(hr_elevation.cols()) + " not divisible by " +
                         std::to_string(total));
  }
  std::vector<GeoGrid> out(static_cast<std::size_t>(levels));
  out.back() = hr_elevation;
  for (int k = levels - 2; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] = coarsen(out[static_cast<std::size_t>(k) + 1], scale);
  }
  return out;
}

StackSpec make_stack(std::vector<nn::SrcnnParams> checkpoints, const GeoGrid& hr_elevation,
                     int scale) {
  auto pyramid = elevation_pyramid(hr_elevation, static_cast<int>(checkpoints.size()), scale);
  StackSpec stack;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    stack.levels.push_back({std::move(checkpoints[k]), scale, std::move(pyramid[k])});
  }
  stack.validate();
  return stack;
}

GeoGrid infer_level(const StackLevel& level, const GeoGrid& precip) {
  GeoGrid up = bicubic_upsample(precip, level.scale);
  if (!up.same_shape(level.elevation) || !up.ref().matches(level.elevation.ref())) {
    throw DataError("upsampled precipitation does not match level elevation lattice");
  }
  const ChannelStack raw({std::move(up), level.elevation}, {"precip", "elevation"});
  const ChannelStack norm = normalize(raw, level.params.norm);
  const std::size_t pad = level.params.arch.shrink() / 2;
  const ChannelStack padded({replicate_pad(norm[0], pad), replicate_pad(norm[1], pad)},
                            norm.roles());
  const nn::Tensor3 out = nn::forward(level.params, nn::to_tensor(padded));
  GeoGrid result = denormalize_channel(nn::plane_to_grid(out, level.elevation.ref()),
                                       level.params.norm, 0);
  for (double& v : result.values()) v = std::max(v, 0.0);
  return result;
}

GeoGrid infer(const StackSpec& stack, const GeoGrid& lr_precip,
              std::vector<std::int64_t>* level_nanos) {
  const GeoGrid expected = stack.input_template();
  if (!lr_precip.same_shape(expected) || !lr_precip.ref().matches(expected.ref())) {
    throw DataError("input lattice " + std::to_string(lr_precip.rows()) + "x" +
                    std::to_string(lr_precip.cols()) + " does not match stack input " +
                    std::to_string(expected.rows()) + "x" + std::to_string(expected.cols()));
  }
  if (level_nanos) level_nanos->assign(stack.levels.size(), 0);
  GeoGrid current = lr_precip;
  auto stamp = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < stack.levels.size(); ++k) {
    current = infer_level(stack.levels[k], current);
    if (level_nanos) {
      const auto now = std::chrono::steady_clock::now();
      (*level_nanos)[k] = std::chrono::duration_cast<std::chrono::nanoseconds>(now - stamp).count();
      stamp = now;
    }
  }
  return current;
}

StackTiming benchmark_stack(const StackSpec& stack, const GridSeries& lr, GridSeries* out) {
  stack.validate();
  const GeoGrid expected = stack.input_template();
  for (const auto& g : lr.days) {
    if (!g.same_shape(expected) || !g.ref().matches(expected.ref())) {
      throw DataError("benchmark input lattice does not match stack input");
    }
  }
  StackTiming timing;
  timing.level_nanos.assign(stack.levels.size(), 0);
  if (out) {
    *out = GridSeries{};
    out->variable = lr.variable;
    out->units = lr.units;
    out->dates = lr.dates;
    out->days.resize(lr.size());
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto stamp = start;
  for (std::size_t d = 0; d < lr.size(); ++d) {
    GeoGrid current = lr.days[d];
    for (std::size_t k = 0; k < stack.levels.size(); ++k) {
      current = infer_level(stack.levels[k], current);
      const auto now = clock::now();
      timing.level_nanos[k] += std::chrono::duration_cast<std::chrono::nanoseconds>(now - stamp).count();
      stamp = now;
    }
    if (out) out->days[d] = std::move(current);
  }
  timing.total_nanos = std::chrono::duration_cast<std::chrono::nanoseconds>(stamp - start).count();
  return timing;
}

GridSeries infer_series(const StackSpec& stack, const GridSeries& lr, unsigned threads) {
  stack.validate();
  return map_series(lr, [&](const GeoGrid& g, std::size_t) { return infer(stack, g); }, threads);
}

StackSpec load_stack(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    f >> doc;
    const auto base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    const GeoGrid elevation = read_raster(resolve(doc.at("elevation").get<std::string>()));
    const int scale = doc.value("scale", 2);
    std::vector<nn::SrcnnParams> checkpoints;
    for (const auto& entry : doc.at("levels")) {
      checkpoints.push_back(nn::load_checkpoint(resolve(entry.get<std::string>())));
    }
    if (checkpoints.empty()) throw DataError(path.string() + ": stack lists no levels");
    return make_stack(std::move(checkpoints), elevation, scale);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kSyntax, path.string() + ": " + e.what());
  }
}

void write_stack_description(const std::filesystem::path& path,
                             const std::filesystem::path& elevation,
                             const std::vector<std::filesystem::path>& checkpoints, int scale) {
  nlohmann::ordered_json doc;
  doc["elevation"] = elevation.string();
  doc["scale"] = scale;
  doc["levels"] = nlohmann::json::array();
  for (const auto& c : checkpoints) doc["levels"].push_back(c.string());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f << doc.dump(2) << '\n';
}

}  // namespace deepsd
