#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepsd/asd_lasso.hpp"
#include "deepsd/bcsd.hpp"
#include "deepsd/checkpoint.hpp"
#include "deepsd/config.hpp"
#include "deepsd/errors.hpp"
#include "deepsd/metrics.hpp"
#include "deepsd/parallel.hpp"
#include "deepsd/raster_io.hpp"
#include "deepsd/series.hpp"
#include "deepsd/srcnn_train.hpp"
#include "deepsd/stack_infer.hpp"
#include "deepsd/synth_data.hpp"

#ifndef DEEPSD_VERSION
#define DEEPSD_VERSION "unknown"
#endif

namespace deepsd::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSubcommands = {"synth", "coarsen", "train", "infer",
                                               "bcsd", "asd", "evaluate", "benchmark"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_dir(const std::string& path, const char* flag) {
  if (!fs::is_directory(path)) throw DataError(std::string(flag) + ": no such directory: " + path);
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw DataError(std::string(flag) + ": no such file: " + path);
}

void require_series(const std::string& path, const char* flag) {
  require_dir(path, flag);
  require_file((fs::path(path) / "manifest.json").string(), flag);
}

// Config echo of every option of `sub` (explicit value or default).
void write_provenance(const fs::path& dir, const CLI::App& sub, unsigned threads,
                      const nlohmann::ordered_json& extra = {}) {
  nlohmann::ordered_json j;
  j["tool"] = "deepsd";
  j["version"] = DEEPSD_VERSION;
  j["subcommand"] = sub.get_name();
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      config[name] = r.empty() ? std::string("true") : r.back();
    } else {
      config[name] = opt->get_default_str();
    }
  }
  config["threads"] = threads;
  j["seed"] = nullptr;
  if (config.contains("seed")) j["seed"] = std::stoull(config["seed"].get<std::string>());
  j["config"] = std::move(config);
  if (!extra.empty()) j["outputs"] = extra;
  fs::create_directories(dir);
  std::ofstream f(dir / "provenance.json", std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write provenance in " + dir.string());
  f << j.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

std::vector<CellIndex> choose_locations(const std::string& file, std::size_t count, std::uint64_t seed,
                                        std::size_t rows, std::size_t cols) {
  if (!file.empty()) {
    auto cells = read_locations(file);
    for (const auto& c : cells) {
      if (c.row >= rows || c.col >= cols) {
        throw DataError("location " + std::to_string(c.row) + " " + std::to_string(c.col) +
                        " outside " + std::to_string(rows) + "x" + std::to_string(cols) + " grid");
      }
    }
    return cells;
  }
  return sample_locations(rows, cols, std::min(count, rows * cols), seed);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthConfig cfg;
  std::string start = "1980-01-01";
  double train_fraction = 0.8;
};

void run_synth(const SynthArgs& a, const CLI::App& sub, unsigned threads) {
  SynthConfig cfg = a.cfg;
  cfg.start = parse_date(a.start);
  cfg.validate();
  const GeoGrid elevation = gen_elevation(cfg);
  GridSeries precip = gen_precip_series(elevation, cfg, threads);
  auto [train, test] = split_train_test(precip, a.train_fraction);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_raster(elevation, out / "elevation.grd");
  write_series(train, out / "train");
  write_series(test, out / "test");
  write_provenance(out, sub, threads,
                   {{"elevation", "elevation.grd"}, {"train_days", train.size()}, {"test_days", test.size()}});
}

struct CoarsenArgs {
  std::string in, out;
  int factor = 8;
};

void run_coarsen(const CoarsenArgs& a, const CLI::App& sub, unsigned threads) {
  const fs::path in(a.in), out(a.out);
  if (fs::is_directory(in)) {
    require_series(a.in, "--in");
    const GridSeries s = read_series(in);
    write_series(map_series(s, [&](const GeoGrid& g, std::size_t) { return coarsen(g, a.factor); }, threads),
                 out);
  } else {
    require_file(a.in, "--in");
    fs::create_directories(out);
    write_raster(coarsen(read_raster(in), a.factor), out / in.filename());
  }
  write_provenance(out, sub, threads);
}

struct TrainArgs {
  std::string train, elevation, out, validate;
  int levels = 1;
  int finest_factor = 1;
  LevelConfig level;
};

void run_train(const TrainArgs& a, const CLI::App& sub, unsigned threads) {
  require_series(a.train, "--train");
  require_file(a.elevation, "--elevation");
  if (!a.validate.empty()) require_series(a.validate, "--validate");
  if (a.levels < 1 || a.levels > 8) throw UsageError("--levels must be in [1, 8]");

  const GridSeries hr = read_series(a.train);
  const GeoGrid elevation = read_raster(a.elevation);
  std::optional<GridSeries> val;
  if (!a.validate.empty()) val = read_series(a.validate);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_raster(elevation, out / "elevation.grd");
  std::vector<fs::path> checkpoints;
  std::string validation_csv = "level,output_factor,network_rmse,bicubic_rmse\n";
  for (int k = 1; k <= a.levels; ++k) {
    LevelConfig cfg = a.level;
    cfg.threads = threads;
    cfg.output_factor = a.finest_factor;
    for (int j = k; j < a.levels; ++j) cfg.output_factor *= cfg.scale;
    // Distinct but reproducible streams per level.
    cfg.seed = a.level.seed + static_cast<std::uint64_t>(k - 1);
    const TrainingSet set = make_training_pairs(hr, elevation, cfg);
    const TrainResult r = train_level(set, cfg);
    const std::string stem = "level_" + std::to_string(k);
    save_checkpoint(r.params, out / (stem + ".src"));
    write_loss_curve(r.loss_curve, out / ("loss_" + std::to_string(k) + ".csv"));
    checkpoints.push_back(stem + ".src");
    if (val) {
      const TrainingSet vset = make_training_pairs(*val, elevation, cfg, &set.stats);
      const PairRmse e = evaluate_rmse(r.params, vset, threads);
      char line[128];
      std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g\n", k, cfg.output_factor, e.network, e.bicubic);
      validation_csv += line;
    }
  }
  if (a.finest_factor == 1) {
    write_stack_description(out / "stack.json", "elevation.grd", checkpoints, a.level.scale);
  }
  if (val) {
    std::ofstream f(out / "validation.csv", std::ios::trunc);
    f << validation_csv;
  }
  write_provenance(out, sub, threads);
}

struct InferArgs {
  std::string stack, in, out;
};

void run_infer(const InferArgs& a, const CLI::App& sub, unsigned threads) {
  require_file(a.stack, "--stack");
  require_series(a.in, "--in");
  const StackSpec stack = load_stack(a.stack);
  const GridSeries lr = read_series(a.in);
  write_series(infer_series(stack, lr, threads), a.out);
  write_provenance(a.out, sub, threads);
}

struct BcsdArgs {
  std::string train, model, in, out;
  BcsdOptions options;
};

void run_bcsd(const BcsdArgs& a, const CLI::App& sub, unsigned threads) {
  if (a.train.empty() == a.model.empty()) throw UsageError("bcsd needs exactly one of --train or --model");
  if (!a.train.empty()) require_series(a.train, "--train");
  if (!a.model.empty()) require_file((fs::path(a.model) / "bcsd_manifest.json").string(), "--model");
  if (!a.in.empty()) require_series(a.in, "--in");

  const fs::path out(a.out);
  BcsdModel model;
  if (!a.train.empty()) {
    model = fit_bcsd(read_series(a.train), a.options);
    save_bcsd(model, out / "model");
  } else {
    model = load_bcsd(a.model);
  }
  if (!a.in.empty()) write_series(downscale_bcsd(model, read_series(a.in), threads), out / "pred");
  write_provenance(out, sub, threads);
}

struct AsdArgs {
  std::string train_lr, train_hr, model, in, out, locations, lambdas;
  std::size_t n_locations = 200;
  std::uint64_t seed = 0;
  asd::AsdOptions options;
};

void write_predictions(const std::vector<asd::AsdLocationModel>& models, const GridSeries& lr,
                       const fs::path& path, unsigned threads) {
  std::vector<std::vector<double>> values(models.size());
  parallel_for(models.size(), threads, [&](std::size_t m) {
    values[m].resize(lr.size());
    for (std::size_t d = 0; d < lr.size(); ++d) values[m][d] = asd::predict_asd(models[m], lr.days[d]);
  });
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f << "day,row,col,value\n";
  char line[128];
  for (std::size_t d = 0; d < lr.size(); ++d) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      std::snprintf(line, sizeof line, "%zu,%zu,%zu,%.9g\n", d, models[m].location.row,
                    models[m].location.col, values[m][d]);
      f << line;
    }
  }
}

void run_asd(const AsdArgs& a, const CLI::App& sub, unsigned threads) {
  const bool fitting = !a.train_lr.empty() || !a.train_hr.empty();
  if (fitting == !a.model.empty()) throw UsageError("asd needs --train-lr/--train-hr or --model, not both");
  if (fitting) {
    require_series(a.train_lr, "--train-lr");
    require_series(a.train_hr, "--train-hr");
  } else {
    require_file(a.model, "--model");
  }
  if (!a.locations.empty()) require_file(a.locations, "--locations");
  if (!a.in.empty()) require_series(a.in, "--in");

  asd::AsdOptions options = a.options;
  options.seed = a.seed;
  if (!a.lambdas.empty()) options.lambda_grid = parse_list(a.lambdas, "--lambdas");

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<asd::AsdLocationModel> models;
  if (fitting) {
    const GridSeries lr = read_series(a.train_lr);
    const GridSeries hr = read_series(a.train_hr);
    if (hr.empty()) throw DataError("--train-hr is empty");
    const auto cells = choose_locations(a.locations, a.n_locations, a.seed, hr.days.front().rows(),
                                        hr.days.front().cols());
    models.resize(cells.size());
    parallel_for(cells.size(), threads,
                 [&](std::size_t i) { models[i] = asd::fit_asd(cells[i], lr, hr, options); });
    asd::save_asd_models(models, out / "asd_models.bin");
    write_locations(cells, out / "locations.txt");
  } else {
    models = asd::load_asd_models(a.model);
  }
  if (!a.in.empty()) write_predictions(models, read_series(a.in), out / "predictions.csv", threads);
  write_provenance(out, sub, threads);
}

struct EvaluateArgs {
  std::string obs, pred, out, locations, thresholds;
  std::size_t n_locations = 200;
  std::uint64_t seed = 0;
  std::size_t min_events = 20;
  double bin_width = 1.0;
};

// Location series from a "day,row,col,value" table, cells in first-seen order.
std::pair<std::vector<CellIndex>, LocationSeries> read_prediction_csv(const fs::path& path, std::size_t days) {
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(f, line);
  if (line.rfind("day,row,col,value", 0) != 0) {
    throw ParseError(ParseError::Kind::kSyntax, path.string() + ": missing day,row,col,value header");
  }
  std::vector<CellIndex> cells;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  LocationSeries values;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t d, r, c;
    double v;
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%lf", &d, &r, &c, &v) != 4 || d >= days) {
      throw ParseError(ParseError::Kind::kSyntax, path.string() + ":" + std::to_string(lineno) + ": bad row");
    }
    auto [it, inserted] = index.try_emplace({r, c}, cells.size());
    if (inserted) {
      cells.push_back({r, c});
      values.emplace_back(days, std::numeric_limits<double>::quiet_NaN());
    }
    values[it->second][d] = v;
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (double v : values[i]) {
      if (std::isnan(v)) throw DataError(path.string() + ": missing days for a location");
    }
  }
  return {cells, values};
}

void run_evaluate(const EvaluateArgs& a, const CLI::App& sub, unsigned threads) {
  require_series(a.obs, "--obs");
  const bool csv = fs::path(a.pred).extension() == ".csv";
  if (csv) {
    require_file(a.pred, "--pred");
    if (!a.locations.empty()) throw UsageError("--locations conflicts with a CSV --pred, which fixes its own cells");
  } else {
    require_series(a.pred, "--pred");
  }
  if (!a.locations.empty()) require_file(a.locations, "--locations");
  const std::vector<double> thresholds =
      a.thresholds.empty() ? kDefaultThresholds : parse_list(a.thresholds, "--thresholds");

  const GridSeries obs = read_series(a.obs);
  if (obs.empty()) throw DataError("--obs is empty");
  std::vector<CellIndex> cells;
  LocationSeries pred_values;
  const fs::path out(a.out);
  fs::create_directories(out);
  if (csv) {
    std::tie(cells, pred_values) = read_prediction_csv(a.pred, obs.size());
  } else {
    const GridSeries pred = read_series(a.pred);
    if (pred.size() != obs.size() || !pred.days.front().same_shape(obs.days.front())) {
      throw DataError("--pred and --obs differ in day count or lattice");
    }
    cells = choose_locations(a.locations, a.n_locations, a.seed, obs.days.front().rows(),
                             obs.days.front().cols());
    pred_values = extract_locations(pred, cells);
    write_raster(rmse_map(obs, pred), out / "rmse_map.grd");
  }
  const LocationSeries obs_values = extract_locations(obs, cells);

  std::vector<EvalReport> reports;
  reports.push_back(overall_report(obs_values, pred_values, a.bin_width));
  for (auto& r : seasonal_report(obs_values, pred_values, obs.dates, a.bin_width)) reports.push_back(std::move(r));
  for (auto& r : extreme_sweep(obs_values, pred_values, thresholds, a.min_events, a.bin_width)) {
    reports.push_back(std::move(r));
  }
  write_report_csv(reports, out / "report.csv");
  write_locations(cells, out / "locations.txt");
  write_provenance(out, sub, threads);
}

struct BenchmarkArgs {
  std::string stack, in, bcsd, out;
  std::size_t days = 0;
  bool keep = false;
};

void run_benchmark(const BenchmarkArgs& a, const CLI::App& sub, unsigned threads) {
  require_file(a.stack, "--stack");
  require_series(a.in, "--in");
  if (!a.bcsd.empty()) require_file((fs::path(a.bcsd) / "bcsd_manifest.json").string(), "--bcsd");

  const StackSpec stack = load_stack(a.stack);
  GridSeries lr = read_series(a.in);
  if (lr.empty()) throw DataError("--in is empty");
  if (a.days > 0 && a.days != lr.size()) {
    // Cycle the available days to the requested length.
    GridSeries cycled;
    cycled.variable = lr.variable;
    cycled.units = lr.units;
    cycled.dates = consecutive_dates(lr.dates.front(), a.days);
    for (std::size_t d = 0; d < a.days; ++d) cycled.days.push_back(lr.days[d % lr.size()]);
    lr = std::move(cycled);
  }

  GridSeries deepsd_out;
  const StackTiming t = benchmark_stack(stack, lr, a.keep ? &deepsd_out : nullptr);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::string csv = "method,stage,days,nanoseconds,seconds\n";
  char line[160];
  for (std::size_t k = 0; k < t.level_nanos.size(); ++k) {
    std::snprintf(line, sizeof line, "deepsd,level_%zu,%zu,%lld,%.9f\n", k + 1, lr.size(),
                  static_cast<long long>(t.level_nanos[k]), static_cast<double>(t.level_nanos[k]) * 1e-9);
    csv += line;
  }
  std::snprintf(line, sizeof line, "deepsd,total,%zu,%lld,%.9f\n", lr.size(),
                static_cast<long long>(t.total_nanos), static_cast<double>(t.total_nanos) * 1e-9);
  csv += line;
  std::printf("deepsd: %zu days in %.3f s", lr.size(), static_cast<double>(t.total_nanos) * 1e-9);
  for (std::size_t k = 0; k < t.level_nanos.size(); ++k) {
    std::printf(" | level %zu %.3f s", k + 1, static_cast<double>(t.level_nanos[k]) * 1e-9);
  }
  std::printf("\n");

  if (!a.bcsd.empty()) {
    const BcsdModel model = load_bcsd(a.bcsd);
    const auto start = std::chrono::steady_clock::now();
    GridSeries bcsd_out = downscale_bcsd(model, lr, 1);
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
    std::snprintf(line, sizeof line, "bcsd,total,%zu,%lld,%.9f\n", lr.size(), static_cast<long long>(ns),
                  static_cast<double>(ns) * 1e-9);
    csv += line;
    std::printf("bcsd: %zu days in %.3f s\n", lr.size(), static_cast<double>(ns) * 1e-9);
    if (a.keep) write_series(bcsd_out, out / "bcsd_pred");
  }
  std::ofstream f(out / "benchmark.csv", std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write benchmark.csv");
  f << csv;
  f.close();
  if (a.keep) write_series(deepsd_out, out / "deepsd_pred");
  write_provenance(out, sub, threads);
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0 && args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file argument");
      config = args[++i];
    } else if (i > 0 && args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return rest;
  const KeyValues kv = read_key_values(config);
  auto pos = std::find_first_of(rest.begin() + (rest.empty() ? 0 : 1), rest.end(), kSubcommands.begin(),
                                kSubcommands.end());
  if (pos == rest.end()) throw UsageError("--config given without a subcommand");
  std::vector<std::string> injected;
  for (const auto& [k, v] : kv) injected.push_back("--" + k + "=" + v);
  rest.insert(pos + 1, injected.begin(), injected.end());
  return rest;
}

int run(const std::vector<std::string>& raw) {
  CLI::App app{"Statistical downscaling with stacked super-resolution networks", "deepsd"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", DEEPSD_VERSION);
  unsigned threads = 1;
  std::string config_path;
  app.add_option("--threads", threads, "Worker threads; 1 is the bit-exact serial reference")
      ->check(CLI::Range(1u, 1024u));
  app.add_option("--config", config_path, "key=value file; explicit flags override it");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate synthetic elevation and daily precipitation");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--days", synth.cfg.days, "Number of days");
  s_synth->add_option("--seed", synth.cfg.seed, "Random seed");
  s_synth->add_option("--rows", synth.cfg.rows, "Grid rows (multiple of 8)");
  s_synth->add_option("--cols", synth.cfg.cols, "Grid columns (multiple of 8)");
  s_synth->add_option("--rain-fraction", synth.cfg.rain_fraction, "Target wet-cell fraction");
  s_synth->add_option("--coupling", synth.cfg.coupling, "Orographic coupling per 3000 m");
  s_synth->add_option("--correlation-length", synth.cfg.correlation_length, "Storm length scale (cells)");
  s_synth->add_option("--gamma-shape", synth.cfg.gamma_shape, "Daily intensity gamma shape");
  s_synth->add_option("--amount-scale", synth.cfg.amount_scale, "Amount per unit storm excess (mm/day)");
  s_synth->add_option("--wetness-spread", synth.cfg.wetness_spread, "Day-to-day wet fraction spread");
  s_synth->add_option("--terrain-exponent", synth.cfg.terrain_exponent, "Terrain spectral slope");
  s_synth->add_option("--start-date", synth.start, "First date (YYYY-MM-DD)");
  s_synth->add_option("--train-fraction", synth.train_fraction, "Chronological train share");

  CoarsenArgs coarsen_args;
  auto* s_coarsen = app.add_subcommand("coarsen", "Area-mean coarsen a series or a raster");
  s_coarsen->add_option("--in", coarsen_args.in, "Series directory or .grd file")->required();
  s_coarsen->add_option("--out", coarsen_args.out, "Output directory")->required();
  s_coarsen->add_option("--factor", coarsen_args.factor, "Block size")->check(CLI::Range(1, 1024));

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train the levels of a DeepSD stack");
  s_train->add_option("--train", train.train, "HR precipitation series")->required();
  s_train->add_option("--elevation", train.elevation, "HR elevation raster")->required();
  s_train->add_option("--out", train.out, "Output directory")->required();
  s_train->add_option("--validate", train.validate, "HR series for held-out RMSE");
  s_train->add_option("--levels", train.levels, "Number of stacked levels");
  s_train->add_option("--finest-factor", train.finest_factor, "Coarsening of the finest level output");
  s_train->add_option("--scale", train.level.scale, "Upscaling per level");
  s_train->add_option("--iterations", train.level.iterations, "Adam steps per level");
  s_train->add_option("--batch", train.level.batch, "Sub-images per step");
  s_train->add_option("--sub-image", train.level.sub_image, "Sub-image size");
  s_train->add_option("--stride", train.level.stride, "Sub-image stride");
  s_train->add_option("--lr-hidden", train.level.lr_hidden, "Learning rate, layers 1-2");
  s_train->add_option("--lr-output", train.level.lr_output, "Learning rate, layer 3");
  s_train->add_option("--init-std", train.level.init_std, "Weight init standard deviation");
  s_train->add_option("--seed", train.level.seed, "Random seed");
  s_train->add_option("--n1", train.level.arch.n1, "Layer 1 filters");
  s_train->add_option("--n2", train.level.arch.n2, "Layer 2 filters");
  s_train->add_option("--f1", train.level.arch.f1, "Layer 1 kernel");
  s_train->add_option("--f2", train.level.arch.f2, "Layer 2 kernel");
  s_train->add_option("--f3", train.level.arch.f3, "Layer 3 kernel");

  InferArgs infer_args;
  auto* s_infer = app.add_subcommand("infer", "Downscale an LR series with a trained stack");
  s_infer->add_option("--stack", infer_args.stack, "stack.json")->required();
  s_infer->add_option("--in", infer_args.in, "LR series")->required();
  s_infer->add_option("--out", infer_args.out, "Output series directory")->required();

  BcsdArgs bcsd;
  auto* s_bcsd = app.add_subcommand("bcsd", "Fit and/or apply the BCSD baseline");
  auto* o_btrain = s_bcsd->add_option("--train", bcsd.train, "HR training series");
  auto* o_bmodel = s_bcsd->add_option("--model", bcsd.model, "Existing model directory");
  o_btrain->excludes(o_bmodel);
  s_bcsd->add_option("--in", bcsd.in, "LR series to downscale");
  s_bcsd->add_option("--out", bcsd.out, "Output directory")->required();
  s_bcsd->add_option("--factor", bcsd.options.factor, "LR to HR factor");
  s_bcsd->add_option("--floor", bcsd.options.denominator_floor, "Denominator floor (mm/day)");
  s_bcsd->add_option("--cap", bcsd.options.factor_cap, "Scaling factor cap");

  AsdArgs asd_args;
  auto* s_asd = app.add_subcommand("asd", "Per-location lasso downscaling baseline");
  s_asd->add_option("--train-lr", asd_args.train_lr, "LR training series");
  s_asd->add_option("--train-hr", asd_args.train_hr, "HR training series");
  s_asd->add_option("--model", asd_args.model, "Existing model file");
  s_asd->add_option("--in", asd_args.in, "LR series to downscale");
  s_asd->add_option("--out", asd_args.out, "Output directory")->required();
  auto* o_aloc = s_asd->add_option("--locations", asd_args.locations, "File of 'row col' lines");
  auto* o_an = s_asd->add_option("--n-locations", asd_args.n_locations, "Random locations to fit");
  o_aloc->excludes(o_an);
  s_asd->add_option("--seed", asd_args.seed, "Random seed (locations and CV folds)");
  s_asd->add_option("--rain-threshold", asd_args.options.rain_threshold, "Rainy day threshold (mm/day)");
  s_asd->add_option("--lambdas", asd_args.lambdas, "Comma-separated penalty grid");
  s_asd->add_option("--folds", asd_args.options.folds, "Cross-validation folds");
  s_asd->add_option("--box", asd_args.options.box, "LR feature box size (odd)");

  EvaluateArgs eval;
  auto* s_eval = app.add_subcommand("evaluate", "Score predictions against observations");
  s_eval->add_option("--obs", eval.obs, "HR observation series")->required();
  s_eval->add_option("--pred", eval.pred, "Prediction series or day,row,col,value CSV")->required();
  s_eval->add_option("--out", eval.out, "Output directory")->required();
  auto* o_eloc = s_eval->add_option("--locations", eval.locations, "File of 'row col' lines");
  auto* o_en = s_eval->add_option("--n-locations", eval.n_locations, "Random locations to score");
  o_eloc->excludes(o_en);
  s_eval->add_option("--seed", eval.seed, "Random seed for location sampling");
  s_eval->add_option("--thresholds", eval.thresholds, "Comma-separated percentile thresholds");
  s_eval->add_option("--min-events", eval.min_events, "Minimum selected days per location");
  s_eval->add_option("--bin-width", eval.bin_width, "Skill histogram bin width (mm/day)");

  BenchmarkArgs bench;
  auto* s_bench = app.add_subcommand("benchmark", "Time stacked inference over a year of LR days");
  s_bench->add_option("--stack", bench.stack, "stack.json")->required();
  s_bench->add_option("--in", bench.in, "LR series")->required();
  s_bench->add_option("--bcsd", bench.bcsd, "BCSD model directory to time as well");
  s_bench->add_option("--out", bench.out, "Output directory")->required();
  s_bench->add_option("--days", bench.days, "Days to run, cycling the input (0 = as given)");
  s_bench->add_flag("--keep-output", bench.keep, "Also write the downscaled series");

  std::vector<std::string> args;
  try {
    args = expand_config(raw);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    std::cout << DEEPSD_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "deepsd: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "deepsd: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "deepsd: " << e.what() << '\n';
    return kData;
  }

  try {
    if (*s_synth) run_synth(synth, *s_synth, threads);
    else if (*s_coarsen) run_coarsen(coarsen_args, *s_coarsen, threads);
    else if (*s_train) run_train(train, *s_train, threads);
    else if (*s_infer) run_infer(infer_args, *s_infer, threads);
    else if (*s_bcsd) run_bcsd(bcsd, *s_bcsd, threads);
    else if (*s_asd) run_asd(asd_args, *s_asd, threads);
    else if (*s_eval) run_evaluate(eval, *s_eval, threads);
    else if (*s_bench) run_benchmark(bench, *s_bench, threads);
  } catch (const UsageError& e) {
    std::cerr << "deepsd: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "deepsd: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "deepsd: " << msg << '\n';
    return kData;
  }
  return kOk;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace deepsd::cli
