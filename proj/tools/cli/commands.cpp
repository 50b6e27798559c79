#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include "cli.hpp"
#include "seasonet/dataio.hpp"
#include "seasonet/evaluation.hpp"
#include "seasonet/model.hpp"
#include "seasonet/stacking.hpp"
#include "seasonet/training.hpp"

namespace seasonet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<MonthRange> optional_range(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return MonthRange::parse(text);
}

std::vector<RegionMask> load_masks(const std::vector<std::string>& paths, RunManifest& m) {
  std::vector<RegionMask> masks;
  for (const auto& p : paths) {
    masks.push_back(dataio::read_mask(p));
    m.add_input(p);
  }
  return masks;
}

std::optional<dataio::ElevationField> load_elevation(const std::string& path, RunManifest& m) {
  if (path.empty()) return std::nullopt;
  m.add_input(path);
  return dataio::read_elevation(path);
}

void write_report(const eval::EvalReport& r, const fs::path& dir, RunManifest& m) {
  eval::write_text(dir / "report.json", eval::report_to_json(r) + "\n");
  eval::write_text(dir / "report.csv", eval::report_to_csv(r));
  m.add_output(dir / "report.json");
  m.add_output(dir / "report.csv");
}

// Options shared by train and finetune.
struct FitFlags {
  std::vector<std::string> data;
  std::vector<std::string> val;
  std::string val_range;
  std::string train_range;
  std::string elevation;
  std::string case_id;
  bool kelvin = false;
  bool no_shuffle = false;
  training::TrainConfig tc;
  std::string out;
  CLI::Option* patience_opt = nullptr;

  // The default patience shrinks to fit short runs; an explicit value is validated as given.
  training::TrainConfig resolved() const {
    auto c = tc;
    c.shuffle = !no_shuffle;
    if (patience_opt->count() == 0 && c.epochs > 0) c.early_stop_patience = std::min(c.early_stop_patience, c.epochs);
    c.validate();
    return c;
  }
};

void add_fit_options(CLI::App* sub, FitFlags& f) {
  sub->add_option("--data", f.data, "Training series (CGT); repeat for ensemble members")->required();
  sub->add_option("--val", f.val, "Validation series (CGT); default: hold out --val-range of the training members");
  sub->add_option("--val-range", f.val_range, "Validation target months YYYY-MM:YYYY-MM");
  sub->add_option("--train-range", f.train_range, "Training target months YYYY-MM:YYYY-MM");
  sub->add_option("--elevation", f.elevation, "Elevation field (CGT, metres)");
  sub->add_flag("--kelvin", f.kelvin, "Series payloads are in Kelvin");
  sub->add_option("--lr", f.tc.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--weight-decay", f.tc.weight_decay, "L2 weight decay")->capture_default_str();
  sub->add_option("--epochs", f.tc.epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--batch", f.tc.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr-step", f.tc.step_size_epochs, "Epochs between learning-rate decays")->capture_default_str();
  sub->add_option("--lr-factor", f.tc.lr_factor, "Learning-rate decay factor")->capture_default_str();
  f.patience_opt = sub->add_option("--patience", f.tc.early_stop_patience, "Early-stopping patience (0 disables)")
                       ->capture_default_str();
  sub->add_option("--seed", f.tc.seed, "Shuffle and initialization seed")->capture_default_str();
  sub->add_flag("--no-shuffle", f.no_shuffle, "Keep sample order fixed");
  sub->add_option("--out", f.out, "Output directory")->required();
}

struct FitData {
  std::vector<GridSeries> members;
  std::vector<GridSeries> val_series;
  MonthRange train_range;
  MonthRange val_range;
  std::optional<dataio::ElevationField> elevation;
};

FitData load_fit_data(const FitFlags& f, RunManifest& m) {
  FitData d;
  dataio::ReadOptions ro;
  ro.kelvin_input = f.kelvin;
  for (const auto& p : f.data) {
    d.members.push_back(dataio::read_series(p, ro));
    m.add_input(p);
  }
  for (const auto& p : f.val) {
    d.val_series.push_back(dataio::read_series(p, ro));
    m.add_input(p);
  }
  d.elevation = load_elevation(f.elevation, m);
  const MonthRange span = d.members.front().span();

  if (d.val_series.empty()) {
    d.val_range = optional_range(f.val_range).value_or(MonthRange{span.last.advanced(-59), span.last});
    d.train_range = optional_range(f.train_range).value_or(MonthRange{span.first, d.val_range.first.advanced(-1)});
    if (d.val_range.first <= d.train_range.last && d.train_range.first <= d.val_range.last) {
      throw ConfigError("training range " + d.train_range.str() + " overlaps validation range " + d.val_range.str());
    }
    d.val_series = d.members;
  } else {
    d.val_range = optional_range(f.val_range).value_or(d.val_series.front().span());
    d.train_range = optional_range(f.train_range).value_or(span);
  }
  if (d.train_range.last < d.train_range.first) throw ConfigError("training range is empty");
  return d;
}

std::vector<stacking::Sample> samples_for(const std::vector<GridSeries>& series, const dataio::ElevationField* elev,
                                          const dataio::NormStats& norm, const stacking::TemporalCase& c,
                                          MonthRange range) {
  std::vector<stacking::Sample> out;
  for (const auto& s : series) {
    auto part = stacking::assemble_samples(s, elev, norm, c, range);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

void record_fit_config(RunManifest& m, const FitFlags& f, const FitData& d, const training::TrainConfig& tc) {
  auto& c = m.config();
  c["train_range"] = d.train_range.str();
  c["val_range"] = d.val_range.str();
  c["validation_source"] = f.val.empty() ? "held-out months of --data" : "--val files";
  c["kelvin_input"] = f.kelvin;
  c["elevation"] = f.elevation.empty() ? json(nullptr) : json(f.elevation);
  c["learning_rate"] = tc.learning_rate;
  c["weight_decay"] = tc.weight_decay;
  c["epochs"] = tc.epochs;
  c["batch_size"] = tc.batch_size;
  c["lr_step_epochs"] = tc.step_size_epochs;
  c["lr_factor"] = tc.lr_factor;
  c["early_stop_patience"] = tc.early_stop_patience;
  c["shuffle"] = tc.shuffle;
  c["adam_beta1"] = tc.adam_defaults.beta1;
  c["adam_beta2"] = tc.adam_defaults.beta2;
  c["adam_epsilon"] = tc.adam_defaults.epsilon;
  m.set_seed(tc.seed);
}

void finish_fit(const training::TrainResult& r, const fs::path& out, RunManifest& m, std::ostream& os) {
  model::save_checkpoint(r.checkpoint, out / "checkpoint");
  training::write_history(r.history, out / "history.json");
  m.add_output(out / "checkpoint");
  m.add_output(out / "history.json");
  m.add_output(out / "train.log");
  m.config()["in_channels"] = r.checkpoint.config.in_channels;
  m.mark("total");
  m.write(out);
  os << "best epoch " << r.history.best_epoch << " val_mse " << r.history.best_validation_loss << "\n";
}

training::EpochCallback epoch_logger(std::ostream& os, std::ofstream& log) {
  return [&os, &log](const training::EpochRecord& r) {
    const auto line = training::format_epoch_line(r);
    os << line << "\n";
    log << line << "\n";
    log.flush();
  };
}

// ---------------------------------------------------------------------------

void register_synth(CLI::App& app, Context& ctx) {
  auto cfg = std::make_shared<dataio::SyntheticConfig>();
  auto start = std::make_shared<std::string>("1940-01");
  auto out = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("synth", "Generate a synthetic temperature series and elevation field");
  sub->add_option("--lat", cfg->n_lat, "Latitude rows (divisible by 8)")->capture_default_str();
  sub->add_option("--lon", cfg->n_lon, "Longitude columns (divisible by 8)")->capture_default_str();
  sub->add_option("--years", cfg->n_years, "Length in years")->capture_default_str();
  sub->add_option("--start", *start, "First month YYYY-MM")->capture_default_str();
  sub->add_option("--seed", cfg->seed, "Noise seed")->capture_default_str();
  sub->add_option("--noise", cfg->noise_std, "Noise standard deviation (degC)")->capture_default_str();
  sub->add_option("--base-equator", cfg->base_equator, "Equatorial mean temperature (degC)")->capture_default_str();
  sub->add_option("--pole-drop", cfg->pole_drop, "Equator-to-pole temperature drop (degC)")->capture_default_str();
  sub->add_option("--seasonal-amplitude", cfg->seasonal_amplitude_pole, "Annual-cycle amplitude at the poles")
      ->capture_default_str();
  sub->add_option("--phase-month", cfg->phase_month, "Month of the northern maximum")->capture_default_str();
  sub->add_option("--trend", cfg->trend, "Warming trend (degC per decade)")->capture_default_str();
  sub->add_option("--lapse-rate", cfg->lapse_rate, "Cooling per km of elevation")->capture_default_str();
  sub->add_option("--elevation-scale", cfg->elevation_scale, "Peak elevation (km)")->capture_default_str();
  sub->add_option("--out", *out, "Output directory")->required();
  sub->callback([&ctx, cfg, start, out] {
    ctx.action = [&ctx, cfg, start, out] {
      cfg->start = MonthStamp::parse(*start);
      cfg->validate();
      RunManifest m("synth", ctx.argv);
      auto& c = m.config();
      c["n_lat"] = cfg->n_lat;
      c["n_lon"] = cfg->n_lon;
      c["n_years"] = cfg->n_years;
      c["start"] = cfg->start.str();
      c["noise_std"] = cfg->noise_std;
      c["base_equator"] = cfg->base_equator;
      c["pole_drop"] = cfg->pole_drop;
      c["seasonal_amplitude_pole"] = cfg->seasonal_amplitude_pole;
      c["phase_month"] = cfg->phase_month;
      c["trend_per_decade"] = cfg->trend;
      c["lapse_rate_per_km"] = cfg->lapse_rate;
      c["elevation_scale_km"] = cfg->elevation_scale;
      m.set_seed(cfg->seed);
      const auto data = dataio::generate_synthetic(*cfg);
      const fs::path dir(*out);
      fs::create_directories(dir);
      dataio::write_cgt(data.series, dir / "temperature.cgt");
      dataio::write_cgt(data.elevation, dir / "elevation.cgt");
      m.add_output(dir / "temperature.cgt");
      m.add_output(dir / "elevation.cgt");
      m.write(dir);
      ctx.out << "wrote " << data.series.size() << " months on a " << cfg->n_lat << "x" << cfg->n_lon << " grid to "
              << dir.string() << "\n";
    };
  });
}

void register_mask(CLI::App& app, Context& ctx) {
  struct Flags {
    std::size_t n_lat = 24;
    std::size_t n_lon = 48;
    std::string name;
    std::string rows;
    std::string cols;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("mask", "Write a rectangular region mask");
  sub->add_option("--lat", f->n_lat, "Latitude rows")->capture_default_str();
  sub->add_option("--lon", f->n_lon, "Longitude columns")->capture_default_str();
  sub->add_option("--name", f->name, "Region name (also the file stem)")->required();
  sub->add_option("--rows", f->rows, "Row index range A:B, half-open")->required();
  sub->add_option("--cols", f->cols, "Column index range A:B, half-open")->required();
  sub->add_option("--out", f->out, "Output directory")->required();
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      auto span = [](const std::string& s) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw ConfigError("expected A:B, got '" + s + "'");
        try {
          return std::pair<std::size_t, std::size_t>(std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1)));
        } catch (const std::logic_error&) {
          throw ConfigError("expected integer range A:B, got '" + s + "'");
        }
      };
      const auto [r0, r1] = span(f->rows);
      const auto [c0, c1] = span(f->cols);
      if (r1 > f->n_lat || c1 > f->n_lon || r0 >= r1 || c0 >= c1) {
        throw ConfigError("mask box " + f->rows + " x " + f->cols + " does not fit the grid");
      }
      const auto mask = RegionMask::box(f->name, f->n_lat, f->n_lon, r0, r1, c0, c1);
      RunManifest m("mask", ctx.argv);
      m.config() = {{"name", f->name}, {"n_lat", f->n_lat}, {"n_lon", f->n_lon}, {"rows", f->rows}, {"cols", f->cols}};
      const fs::path dir(f->out);
      fs::create_directories(dir);
      dataio::write_cgt(mask, dir / (f->name + ".cgt"));
      m.add_output(dir / (f->name + ".cgt"));
      m.write(dir);
      ctx.out << "mask " << f->name << " selects " << mask.count() << " cells\n";
    };
  });
}

void register_train(CLI::App& app, Context& ctx) {
  struct Flags : FitFlags {
    std::string arch = "unetpp";
    int width = 32;
    std::string padding = "circular-both";
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("train", "Train a forecasting model");
  add_fit_options(sub, *f);
  sub->add_option("--case", f->case_id, "Temporal case id (seq-6..seq-36, y1m1..y4m2)")->required();
  sub->add_option("--arch", f->arch, "unet or unetpp")->capture_default_str();
  sub->add_option("--width", f->width, "Channels of the first encoder level")->capture_default_str();
  sub->add_option("--padding", f->padding, "circular-both or circular-lon-reflect-lat")->capture_default_str();
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      const auto tcase = stacking::TemporalCase::parse(f->case_id);
      model::ModelConfig mc;
      mc.arch = model::parse_arch(f->arch);
      mc.padding = model::parse_padding(f->padding);
      if (f->width < 1) throw ConfigError("--width must be positive");
      mc.base_width = f->width;
      mc.elevation = !f->elevation.empty();
      mc.case_id = tcase.id();
      mc.in_channels = static_cast<int>(stacking::channel_count(tcase, mc.elevation));
      const auto tc = f->resolved();

      RunManifest m("train", ctx.argv);
      const FitData d = load_fit_data(*f, m);
      std::vector<GridSeries> norm_src;
      for (const auto& s : d.members) {
        const MonthStamp last = std::min(s.end(), d.train_range.last);
        if (last < s.start()) throw CoverageError("training range lies before member span " + s.span().str());
        norm_src.push_back(s.slice({s.start(), last}));
      }
      const auto* elev = d.elevation ? &*d.elevation : nullptr;
      mc.norm = dataio::compute_norm_stats(norm_src, elev, "training members up to " + d.train_range.last.str());
      const auto tr = samples_for(d.members, elev, mc.norm, tcase, d.train_range);
      const auto va = samples_for(d.val_series, elev, mc.norm, tcase, d.val_range);

      record_fit_config(m, *f, d, tc);
      auto& c = m.config();
      c["case"] = mc.case_id;
      c["arch"] = model::arch_name(mc.arch);
      c["base_width"] = mc.base_width;
      c["padding"] = model::padding_name(mc.padding);
      c["norm_mean"] = mc.norm.mean;
      c["norm_std"] = mc.norm.std;
      c["train_samples"] = tr.size();
      c["val_samples"] = va.size();
      m.mark("load");

      model::Model net(mc, tc.seed);
      const fs::path out(f->out);
      fs::create_directories(out);
      std::ofstream log(out / "train.log", std::ios::trunc);
      auto result = training::train(net, tr, va, tc, epoch_logger(ctx.out, log));
      for (const auto& p : f->data) result.checkpoint.provenance.dataset_ids.push_back(fs::path(p).filename().string());
      finish_fit(result, out, m, ctx.out);
    };
  });
}

void register_finetune(CLI::App& app, Context& ctx) {
  struct Flags : FitFlags {
    std::string checkpoint;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("finetune", "Continue training a checkpoint on new data");
  add_fit_options(sub, *f);
  sub->add_option("--checkpoint", f->checkpoint, "Checkpoint directory")->required();
  sub->add_option("--case", f->case_id, "Temporal case id; must match the checkpoint");
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      RunManifest m("finetune", ctx.argv);
      const auto ckpt = model::load_checkpoint(f->checkpoint);
      m.add_input(f->checkpoint);
      const auto tcase = stacking::TemporalCase::parse(f->case_id.empty() ? ckpt.config.case_id : f->case_id);
      if (tcase.id() != ckpt.config.case_id) {
        throw ConfigError("case " + tcase.id() + " does not match the checkpoint's case " + ckpt.config.case_id);
      }
      if (ckpt.config.elevation == f->elevation.empty()) {
        throw ConfigError(ckpt.config.elevation ? "checkpoint expects an elevation channel; pass --elevation"
                                                : "checkpoint has no elevation channel; drop --elevation");
      }
      const auto tc = f->resolved();
      const FitData d = load_fit_data(*f, m);
      const auto* elev = d.elevation ? &*d.elevation : nullptr;
      const auto& norm = ckpt.config.norm;
      const auto tr = samples_for(d.members, elev, norm, tcase, d.train_range);
      const auto va = samples_for(d.val_series, elev, norm, tcase, d.val_range);
      record_fit_config(m, *f, d, tc);
      m.config()["case"] = tcase.id();
      m.config()["checkpoint"] = f->checkpoint;
      m.config()["train_samples"] = tr.size();
      m.config()["val_samples"] = va.size();
      m.mark("load");

      const fs::path out(f->out);
      fs::create_directories(out);
      std::ofstream log(out / "train.log", std::ios::trunc);
      auto result = training::finetune(ckpt, tr, va, tc, epoch_logger(ctx.out, log));
      result.checkpoint.provenance.parent = f->checkpoint;
      for (const auto& p : f->data) result.checkpoint.provenance.dataset_ids.push_back(fs::path(p).filename().string());
      finish_fit(result, out, m, ctx.out);
    };
  });
}

void register_predict(CLI::App& app, Context& ctx) {
  struct Flags {
    std::string checkpoint;
    std::string series;
    std::string elevation;
    std::string range;
    bool kelvin = false;
    int batch = 16;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("predict", "Forecast every month of a range");
  sub->add_option("--checkpoint", f->checkpoint, "Checkpoint directory")->required();
  sub->add_option("--series", f->series, "Input history (CGT)")->required();
  sub->add_option("--elevation", f->elevation, "Elevation field (CGT)");
  sub->add_option("--range", f->range, "Target months YYYY-MM:YYYY-MM")->required();
  sub->add_flag("--kelvin", f->kelvin, "Series payload is in Kelvin");
  sub->add_option("--batch", f->batch, "Inference batch size")->capture_default_str();
  sub->add_option("--out", f->out, "Output directory")->required();
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      RunManifest m("predict", ctx.argv);
      const auto range = MonthRange::parse(f->range);
      auto ckpt = model::load_checkpoint(f->checkpoint);
      m.add_input(f->checkpoint);
      dataio::ReadOptions ro;
      ro.kelvin_input = f->kelvin;
      const auto series = dataio::read_series(f->series, ro);
      m.add_input(f->series);
      const auto elev = load_elevation(f->elevation, m);
      auto net = model::from_checkpoint(ckpt);
      const auto pred = training::predict_range(net, series, elev ? &*elev : nullptr, range, f->batch);
      m.config() = {{"range", range.str()}, {"case", ckpt.config.case_id}, {"batch", f->batch}, {"kelvin_input", f->kelvin}};
      const fs::path out(f->out);
      fs::create_directories(out);
      dataio::write_cgt(pred, out / "predictions.cgt");
      m.add_output(out / "predictions.cgt");
      m.write(out);
      ctx.out << "predicted " << pred.size() << " months\n";
    };
  });
}

void register_evaluate(CLI::App& app, Context& ctx) {
  struct Flags {
    std::string checkpoint;
    std::string predictions;
    std::string truth;
    std::string series;
    std::string elevation;
    std::string range;
    std::string clim_range;
    std::vector<std::string> masks;
    std::vector<std::string> ensemble;
    std::string case_id;
    bool no_persistence = false;
    bool kelvin = false;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("evaluate", "Score forecasts against a truth series");
  auto* ck = sub->add_option("--checkpoint", f->checkpoint, "Checkpoint directory");
  auto* pr = sub->add_option("--predictions", f->predictions, "Precomputed forecasts (CGT)");
  ck->excludes(pr);
  sub->add_option("--truth", f->truth, "Truth series (CGT)")->required();
  sub->add_option("--series", f->series, "Input history for the checkpoint (default: truth)");
  sub->add_option("--elevation", f->elevation, "Elevation field (CGT)");
  sub->add_option("--range", f->range, "Evaluation months YYYY-MM:YYYY-MM")->required();
  sub->add_option("--clim-range", f->clim_range, "Climatology base range for anomaly bins");
  sub->add_option("--mask", f->masks, "Region mask (CGT); repeat for several regions");
  sub->add_option("--ensemble", f->ensemble, "Ensemble member series (CGT); repeat");
  sub->add_option("--case", f->case_id, "Case id recorded in the report (default: checkpoint's)");
  sub->add_flag("--no-persistence", f->no_persistence, "Skip the persistence baseline");
  sub->add_flag("--kelvin", f->kelvin, "Series payloads are in Kelvin");
  sub->add_option("--out", f->out, "Output directory")->required();
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      if (f->checkpoint.empty() == f->predictions.empty()) {
        throw ConfigError("pass exactly one of --checkpoint or --predictions");
      }
      RunManifest m("evaluate", ctx.argv);
      const auto range = MonthRange::parse(f->range);
      dataio::ReadOptions ro;
      ro.kelvin_input = f->kelvin;
      const auto truth = dataio::read_series(f->truth, ro);
      m.add_input(f->truth);
      const auto masks = load_masks(f->masks, m);
      eval::EvalOptions opts;
      opts.persistence_baseline = !f->no_persistence;
      for (const auto& p : f->ensemble) {
        opts.ensemble_members.push_back(dataio::read_series(p, ro));
        m.add_input(p);
      }

      GridSeries pred;
      if (!f->checkpoint.empty()) {
        const auto ckpt = model::load_checkpoint(f->checkpoint);
        m.add_input(f->checkpoint);
        const auto elev = load_elevation(f->elevation, m);
        GridSeries history = truth;
        if (!f->series.empty()) {
          history = dataio::read_series(f->series, ro);
          m.add_input(f->series);
        }
        auto net = model::from_checkpoint(ckpt);
        pred = training::predict_range(net, history, elev ? &*elev : nullptr, range);
        opts.case_id = f->case_id.empty() ? ckpt.config.case_id : f->case_id;
        opts.checkpoint_id = f->checkpoint;
      } else {
        pred = dataio::read_series(f->predictions, ro);
        m.add_input(f->predictions);
        opts.case_id = f->case_id;
        opts.checkpoint_id = f->predictions;
      }
      auto report = eval::evaluate_series(pred, truth, masks, range, opts);
      const fs::path out(f->out);
      fs::create_directories(out);

      m.config() = {{"range", range.str()},
                    {"case", opts.case_id},
                    {"regions", report.regions},
                    {"persistence_baseline", opts.persistence_baseline},
                    {"ensemble_members", f->ensemble.size()},
                    {"kelvin_input", f->kelvin}};
      if (const auto clim_range = optional_range(f->clim_range)) {
        report.climatology_base_range = *clim_range;
        const auto clim = monthly_climatology(truth, *clim_range);
        const auto edges = eval::default_anomaly_edges();
        const GridSeries eval_pred = pred.slice(range);
        const GridSeries* base = nullptr;
        GridSeries ens;
        if (!opts.ensemble_members.empty()) {
          ens = dataio::ensemble_mean(opts.ensemble_members).slice(range);
          base = &ens;
        }
        const auto bins = eval::binned_abs_error(eval_pred, truth.slice(range), clim, edges, base);
        eval::write_text(out / "bins.json", eval::bin_stats_to_json(bins) + "\n");
        m.add_output(out / "bins.json");
        m.config()["clim_range"] = clim_range->str();
        m.config()["anomaly_edges"] = edges;
      }
      const auto reg = eval::regression_by_region(pred, truth, masks, range);
      eval::write_text(out / "regression.json", eval::regression_to_json(reg) + "\n");
      m.add_output(out / "regression.json");
      write_report(report, out, m);
      if (!f->checkpoint.empty()) {
        dataio::write_cgt(pred.slice(range), out / "predictions.cgt");
        m.add_output(out / "predictions.cgt");
      }
      m.write(out);
      ctx.out << "overall MAE " << report.model.overall_mae;
      if (const auto* p = report.baseline("persistence")) ctx.out << "  persistence " << p->overall_mae;
      if (const auto* e = report.baseline("ensemble_mean")) ctx.out << "  ensemble mean " << e->overall_mae;
      ctx.out << "\n";
    };
  });
}

void register_rank(CLI::App& app, Context& ctx) {
  auto reports = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("rank", "Rank the 14 temporal cases per region/season cell");
  sub->add_option("--reports", *reports, "Evaluation reports (JSON), one per case")->required();
  sub->add_option("--out", *out, "Output directory")->required();
  sub->callback([&ctx, reports, out] {
    ctx.action = [&ctx, reports, out] {
      RunManifest m("rank", ctx.argv);
      std::vector<eval::EvalReport> rs;
      for (const auto& p : *reports) {
        rs.push_back(eval::report_from_json(eval::read_text(p)));
        m.add_input(p);
      }
      const auto table = eval::rank_cases(rs);
      const fs::path dir(*out);
      fs::create_directories(dir);
      eval::write_text(dir / "rank.json", eval::rank_table_to_json(table) + "\n");
      eval::write_text(dir / "rank.csv", eval::rank_table_to_csv(table));
      m.add_output(dir / "rank.json");
      m.add_output(dir / "rank.csv");
      m.config() = {{"reports", reports->size()}, {"overall_rule", table.overall_rule}};
      m.write(dir);
      const auto overall = table.columns.size() - 1;
      for (std::size_t i = 0; i < table.case_ids.size(); ++i) {
        ctx.out << table.case_ids[i] << " overall rank " << table.rank[i][overall] << " MAE " << table.mae[i][overall]
                << "\n";
      }
    };
  });
}

void register_baseline(CLI::App& app, Context& ctx) {
  struct Flags {
    std::string truth;
    std::string range;
    std::vector<std::string> masks;
    std::vector<std::string> members;
    bool kelvin = false;
    std::string out;
  };
  auto* sub = app.add_subcommand("baseline", "Score a reference forecast");
  sub->require_subcommand(1);
  for (const std::string kind : {"persistence", "ensemble"}) {
    auto f = std::make_shared<Flags>();
    auto* b = sub->add_subcommand(kind, kind == "persistence" ? "Previous month as the forecast"
                                                              : "Per-cell mean of ensemble members");
    b->add_option("--truth", f->truth, "Truth series (CGT)")->required();
    b->add_option("--range", f->range, "Evaluation months YYYY-MM:YYYY-MM")->required();
    b->add_option("--mask", f->masks, "Region mask (CGT); repeat");
    if (kind == "ensemble") b->add_option("--members", f->members, "Member series (CGT); repeat")->required();
    b->add_flag("--kelvin", f->kelvin, "Series payloads are in Kelvin");
    b->add_option("--out", f->out, "Output directory")->required();
    b->callback([&ctx, f, kind] {
      ctx.action = [&ctx, f, kind] {
        RunManifest m("baseline " + kind, ctx.argv);
        const auto range = MonthRange::parse(f->range);
        dataio::ReadOptions ro;
        ro.kelvin_input = f->kelvin;
        const auto truth = dataio::read_series(f->truth, ro);
        m.add_input(f->truth);
        const auto masks = load_masks(f->masks, m);
        eval::EvalReport report;
        if (kind == "persistence") {
          report = eval::persistence_report(truth, masks, range);
        } else {
          std::vector<GridSeries> members;
          for (const auto& p : f->members) {
            members.push_back(dataio::read_series(p, ro));
            m.add_input(p);
          }
          report = eval::ensemble_report(members, truth, masks, range);
        }
        m.config() = {{"baseline", kind}, {"range", range.str()}, {"regions", report.regions},
                      {"kelvin_input", f->kelvin}};
        const fs::path out(f->out);
        fs::create_directories(out);
        write_report(report, out, m);
        m.write(out);
        ctx.out << kind << " overall MAE " << report.model.overall_mae << "\n";
      };
    });
  }
}

void register_heatmap(CLI::App& app, Context& ctx) {
  struct Flags {
    std::string report;
    std::string system = "model";
    std::string field = "mae";
    std::string cgt;
    std::string month;
    std::optional<double> lo;
    std::optional<double> hi;
    std::string name = "heatmap";
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("heatmap", "Render a stored field as a PGM image");
  auto* rep = sub->add_option("--report", f->report, "Evaluation report (JSON)");
  auto* cgt = sub->add_option("--cgt", f->cgt, "Any CGT file");
  rep->excludes(cgt);
  sub->add_option("--system", f->system, "System inside the report")->capture_default_str();
  sub->add_option("--field", f->field, "mae or a season name (Winter, Spring, Summer, Fall)")->capture_default_str();
  sub->add_option("--month", f->month, "Month YYYY-MM for temperature CGT files (default: first)");
  sub->add_option("--lo", f->lo, "Value mapped to 0");
  sub->add_option("--hi", f->hi, "Value mapped to 255");
  sub->add_option("--name", f->name, "Image file stem")->capture_default_str();
  sub->add_option("--out", f->out, "Output directory")->required();
  sub->callback([&ctx, f] {
    ctx.action = [&ctx, f] {
      if (f->report.empty() == f->cgt.empty()) throw ConfigError("pass exactly one of --report or --cgt");
      if (f->lo.has_value() != f->hi.has_value()) throw ConfigError("--lo and --hi go together");
      RunManifest m("heatmap", ctx.argv);
      GridField field;
      if (!f->report.empty()) {
        const auto r = eval::report_from_json(eval::read_text(f->report));
        m.add_input(f->report);
        const eval::SystemScores* s = r.model.system == f->system ? &r.model : r.baseline(f->system);
        if (s == nullptr) throw ConfigError("report has no system '" + f->system + "'");
        if (f->field == "mae") {
          field = s->mae_field;
        } else {
          const auto it = s->seasonal_mae_fields.find(f->field);
          if (it == s->seasonal_mae_fields.end()) throw ConfigError("report has no field '" + f->field + "'");
          field = it->second;
        }
      } else {
        m.add_input(f->cgt);
        const auto obj = dataio::read_cgt(f->cgt);
        if (const auto* s = std::get_if<GridSeries>(&obj)) {
          field = f->month.empty() ? (*s)[0] : (*s)[s->index_of(MonthStamp::parse(f->month))];
        } else if (const auto* e = std::get_if<dataio::ElevationField>(&obj)) {
          field = e->field;
        } else {
          field = std::get<RegionMask>(obj).weights();
        }
      }
      std::optional<eval::HeatmapScale> scale;
      if (f->lo) scale = eval::HeatmapScale{*f->lo, *f->hi};
      const fs::path out(f->out);
      fs::create_directories(out);
      const auto used = eval::emit_heatmap(field, out / (f->name + ".pgm"), scale);
      m.config() = {{"field", f->field}, {"system", f->system}, {"lo", used.lo}, {"hi", used.hi}};
      m.add_output(out / (f->name + ".pgm"));
      m.add_output(out / (f->name + ".pgm.txt"));
      m.write(out);
      ctx.out << "heatmap " << field.n_lon() << "x" << field.n_lat() << " range [" << used.lo << ", " << used.hi
              << "]\n";
    };
  });
}

}  // namespace

void register_commands(CLI::App& app, Context& ctx) {
  register_synth(app, ctx);
  register_mask(app, ctx);
  register_train(app, ctx);
  register_finetune(app, ctx);
  register_predict(app, ctx);
  register_evaluate(app, ctx);
  register_rank(app, ctx);
  register_baseline(app, ctx);
  register_heatmap(app, ctx);
}

}  // namespace seasonet::cli
