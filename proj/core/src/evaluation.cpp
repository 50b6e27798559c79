#include "seasonet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "seasonet/dataio.hpp"
#include "seasonet/stacking.hpp"

namespace seasonet::eval {

const SystemScores* EvalReport::baseline(const std::string& name) const {
  for (const auto& b : baselines) {
    if (b.system == name) return &b;
  }
  return nullptr;
}

GridField persistence_forecast(const GridSeries& series, std::size_t target_index) {
  if (target_index == 0) throw InsufficientHistoryError("persistence needs the month before the target");
  if (target_index > series.size()) throw OutOfRangeError("persistence target past the series end");
  return series[target_index - 1];
}

namespace {

void require_coverage(const GridSeries& s, MonthRange range, const std::string& what) {
  if (range.first < s.start() || s.end() < range.last) {
    throw CoverageError(what + " spans " + s.span().str() + " and does not cover " + range.str());
  }
}

std::vector<std::string> region_names(std::span<const RegionMask> masks) {
  std::vector<std::string> out;
  if (masks.empty()) {
    out.emplace_back(kGlobalRegion);
    return out;
  }
  for (std::size_t k = 0; k < masks.size(); ++k) {
    bool seen = false;
    for (std::size_t q = 0; q < k; ++q) {
      if (masks[q].name() != masks[k].name()) continue;
      if (!(masks[q].weights() == masks[k].weights())) {
        throw ConfigError("two different masks share the region name '" + masks[k].name() + "'");
      }
      seen = true;
    }
    if (!seen) out.push_back(masks[k].name());
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

SystemScores score_system(const std::string& name, const GridSeries& predictions, const GridSeries& truth,
                          std::span<const RegionMask> masks, MonthRange range) {
  require_coverage(truth, range, "truth series");
  require_coverage(predictions, range, "predictions for " + name);
  if (predictions.n_lat() != truth.n_lat() || predictions.n_lon() != truth.n_lon()) {
    throw DimensionError("predictions and truth differ in grid shape");
  }
  region_names(masks);
  for (const auto& m : masks) {
    if (m.n_lat() != truth.n_lat() || m.n_lon() != truth.n_lon()) {
      throw DimensionError("mask '" + m.name() + "' does not match the grid");
    }
  }

  SystemScores s;
  s.system = name;
  const auto months = static_cast<std::size_t>(range.size());
  const std::size_t n_lat = truth.n_lat();
  const std::size_t n_lon = truth.n_lon();

  std::vector<double> field_sum(n_lat * n_lon, 0.0);
  std::map<std::string, std::vector<double>> season_field_sum;
  std::map<std::string, std::size_t> season_months;
  std::vector<double> global(months);
  std::map<std::string, std::vector<double>> regional;
  for (const auto& m : masks) regional[m.name()].resize(months);

  for (std::size_t k = 0; k < months; ++k) {
    const MonthStamp stamp = range.first.advanced(static_cast<long>(k));
    const GridField& p = predictions[predictions.index_of(stamp)];
    const GridField& t = truth[truth.index_of(stamp)];
    global[k] = mae(p, t);
    for (const auto& m : masks) regional[m.name()][k] = masked_mae(p, t, m);
    const std::string season(season_name(season_of(stamp.month)));
    auto& sf = season_field_sum[season];
    if (sf.empty()) sf.assign(n_lat * n_lon, 0.0);
    ++season_months[season];
    const auto pv = p.values();
    const auto tv = t.values();
    for (std::size_t c = 0; c < pv.size(); ++c) {
      const double e = std::abs(pv[c] - tv[c]);
      field_sum[c] += e;
      sf[c] += e;
    }
  }

  s.overall_mae = mean_of(global);
  s.mae_time_series[kGlobalRegion] = global;
  for (auto& [region, series] : regional) {
    s.per_region_mae[region] = mean_of(series);
    s.mae_time_series[region] = series;
  }
  if (masks.empty()) s.per_region_mae[kGlobalRegion] = s.overall_mae;

  // Season and region x season aggregates (regions default to the full grid).
  std::map<std::string, std::vector<double>> by_season;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_region_season;
  for (std::size_t k = 0; k < months; ++k) {
    const std::string season(season_name(season_of(range.first.advanced(static_cast<long>(k)).month)));
    by_season[season].push_back(global[k]);
    if (masks.empty()) {
      by_region_season[kGlobalRegion][season].push_back(global[k]);
    } else {
      for (const auto& [region, series] : regional) by_region_season[region][season].push_back(series[k]);
    }
  }
  for (const auto& [season, v] : by_season) s.per_season_mae[season] = mean_of(v);
  for (const auto& [region, seasons] : by_region_season)
    for (const auto& [season, v] : seasons) s.per_region_season_mae[region][season] = mean_of(v);

  for (double& v : field_sum) v /= static_cast<double>(months);
  s.mae_field = GridField(n_lat, n_lon, std::move(field_sum));
  for (auto& [season, sf] : season_field_sum) {
    for (double& v : sf) v /= static_cast<double>(season_months[season]);
    s.seasonal_mae_fields.emplace(season, GridField(n_lat, n_lon, std::move(sf)));
  }
  return s;
}

namespace {

GridSeries persistence_series(const GridSeries& truth, MonthRange range) {
  require_coverage(truth, range, "truth series");
  const std::size_t first = truth.index_of(range.first);
  if (first == 0) throw InsufficientHistoryError("persistence baseline needs the month before " + range.first.str());
  std::vector<GridField> out;
  for (long k = 0; k < range.size(); ++k) out.push_back(persistence_forecast(truth, first + static_cast<std::size_t>(k)));
  return GridSeries(range.first, std::move(out));
}

}  // namespace

EvalReport evaluate_series(const GridSeries& predictions, const GridSeries& truth, std::span<const RegionMask> masks,
                           MonthRange range, const EvalOptions& opts) {
  EvalReport r;
  r.case_id = opts.case_id;
  r.checkpoint_id = opts.checkpoint_id;
  r.eval_range = range;
  r.regions = region_names(masks);
  r.model = score_system(opts.system_name, predictions, truth, masks, range);
  if (opts.persistence_baseline) {
    r.baselines.push_back(score_system("persistence", persistence_series(truth, range), truth, masks, range));
  }
  if (!opts.ensemble_members.empty()) {
    const GridSeries ens = dataio::ensemble_mean(opts.ensemble_members);
    r.baselines.push_back(score_system("ensemble_mean", ens, truth, masks, range));
  }
  return r;
}

EvalReport evaluate(const Predictor& predictor, const GridSeries& truth, std::span<const RegionMask> masks,
                    MonthRange range, const EvalOptions& opts) {
  require_coverage(truth, range, "truth series");
  std::vector<GridField> preds;
  preds.reserve(static_cast<std::size_t>(range.size()));
  for (long k = 0; k < range.size(); ++k) {
    GridField p = predictor(range.first.advanced(k));
    if (!p.same_shape(truth[0])) throw DimensionError("predictor returned a field of the wrong shape");
    preds.push_back(std::move(p));
  }
  return evaluate_series(GridSeries(range.first, std::move(preds)), truth, masks, range, opts);
}

EvalReport persistence_report(const GridSeries& truth, std::span<const RegionMask> masks, MonthRange range) {
  EvalOptions o;
  o.persistence_baseline = false;
  o.system_name = "persistence";
  o.case_id = "persistence";
  return evaluate_series(persistence_series(truth, range), truth, masks, range, o);
}

EvalReport ensemble_report(std::span<const GridSeries> members, const GridSeries& truth,
                           std::span<const RegionMask> masks, MonthRange range) {
  EvalOptions o;
  o.persistence_baseline = false;
  o.system_name = "ensemble_mean";
  o.case_id = "ensemble_mean";
  return evaluate_series(dataio::ensemble_mean(members), truth, masks, range, o);
}

// ---------------------------------------------------------------------------

int RankTable::rank_of(const std::string& case_id, const std::string& column) const {
  const auto ci = std::find(case_ids.begin(), case_ids.end(), case_id);
  const auto cj = std::find(columns.begin(), columns.end(), column);
  if (ci == case_ids.end() || cj == columns.end()) throw OutOfRangeError("no rank for " + case_id + " / " + column);
  return rank[static_cast<std::size_t>(ci - case_ids.begin())][static_cast<std::size_t>(cj - columns.begin())];
}

RankTable rank_cases(std::span<const EvalReport> reports) {
  const auto& cases = stacking::enumerate_cases();
  if (reports.size() != cases.size()) {
    throw ConfigError("ranking needs exactly " + std::to_string(cases.size()) + " reports, got " +
                      std::to_string(reports.size()));
  }
  std::vector<const EvalReport*> by_case(cases.size(), nullptr);
  for (const auto& r : reports) {
    const auto idx = stacking::canonical_index(r.case_id);
    if (by_case[idx] != nullptr) throw ConfigError("duplicate report for case " + r.case_id);
    by_case[idx] = &r;
  }

  // Cell structure comes from the first case and must match for all.
  std::vector<std::pair<std::string, std::string>> cells;
  for (const auto& [region, seasons] : by_case[0]->model.per_region_season_mae)
    for (const auto& [season, v] : seasons) cells.emplace_back(region, season);
  if (cells.empty()) throw ConfigError("reports hold no region x season cells");

  RankTable t;
  for (const auto& [region, season] : cells) t.columns.push_back(region + "/" + season);
  t.columns.emplace_back("overall");
  for (std::size_t c = 0; c < cases.size(); ++c) {
    t.case_ids.push_back(cases[c].id());
    const auto& rs = by_case[c]->model.per_region_season_mae;
    std::vector<double> row;
    std::size_t n_cells = 0;
    for (const auto& [region, seasons] : rs) n_cells += seasons.size();
    if (n_cells != cells.size()) throw ConfigError("report for " + cases[c].id() + " has a different cell structure");
    for (const auto& [region, season] : cells) {
      const auto ri = rs.find(region);
      if (ri == rs.end() || !ri->second.contains(season)) {
        throw ConfigError("report for " + cases[c].id() + " lacks cell " + region + "/" + season);
      }
      row.push_back(ri->second.at(season));
    }
    row.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
    t.mae.push_back(std::move(row));
  }

  t.rank.assign(cases.size(), std::vector<int>(t.columns.size(), 0));
  for (std::size_t col = 0; col < t.columns.size(); ++col) {
    std::vector<std::size_t> order(cases.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return t.mae[a][col] < t.mae[b][col]; });
    for (std::size_t r = 0; r < order.size(); ++r) t.rank[order[r]][col] = static_cast<int>(r) + 1;
  }
  return t;
}

EvalReport single_cell_report(const std::string& case_id, double value) {
  EvalReport r;
  r.case_id = case_id;
  r.regions = {kGlobalRegion};
  r.model.system = "model";
  r.model.overall_mae = value;
  r.model.per_region_mae[kGlobalRegion] = value;
  r.model.per_region_season_mae[kGlobalRegion]["all"] = value;
  r.model.mae_time_series[kGlobalRegion] = {value};
  r.model.mae_field = GridField(1, 1, value);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<double> default_anomaly_edges() {
  std::vector<double> e;
  for (int k = -10; k <= 10; ++k) e.push_back(k);
  return e;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BinStats binned_abs_error(const GridSeries& pred, const GridSeries& truth, const Climatology& clim,
                          std::span<const double> edges, const GridSeries* baseline) {
  if (edges.size() < 2) throw ConfigError("need at least two bin edges");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw ConfigError("bin edges must be strictly increasing");
  }
  MonthStamp first = std::max(pred.start(), truth.start());
  MonthStamp last = std::min(pred.end(), truth.end());
  if (baseline != nullptr) {
    first = std::max(first, baseline->start());
    last = std::min(last, baseline->end());
  }
  if (last < first) throw CoverageError("predictions and truth do not overlap in time");
  if (pred.n_lat() != truth.n_lat() || pred.n_lon() != truth.n_lon()) throw DimensionError("grid mismatch");

  const std::size_t n_bins = edges.size() - 1;
  std::vector<std::vector<double>> model_ae(n_bins);
  std::vector<std::vector<double>> base_ae(n_bins);
  BinStats out;
  out.edges.assign(edges.begin(), edges.end());
  for (MonthStamp m = first; m <= last; m = m.advanced(1)) {
    const auto tv = truth[truth.index_of(m)].values();
    const auto pv = pred[pred.index_of(m)].values();
    const auto cv = clim.for_month(m.month).values();
    std::span<const double> bv;
    if (baseline != nullptr) bv = (*baseline)[baseline->index_of(m)].values();
    for (std::size_t c = 0; c < tv.size(); ++c) {
      ++out.total_pairs;
      const double anomaly = tv[c] - cv[c];
      if (anomaly < edges.front() || anomaly > edges.back()) continue;
      auto it = std::upper_bound(edges.begin(), edges.end(), anomaly);
      std::size_t bin = static_cast<std::size_t>(it - edges.begin()) - 1;
      if (bin >= n_bins) bin = n_bins - 1;  // right edge of the last bin
      model_ae[bin].push_back(std::abs(pv[c] - tv[c]));
      if (baseline != nullptr) base_ae[bin].push_back(std::abs(bv[c] - tv[c]));
      ++out.pairs_in_range;
    }
  }
  out.counts.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) out.counts[b] = model_ae[b].size();
  auto summarize = [&](const std::string& name, const std::vector<std::vector<double>>& ae) {
    SystemBins sb;
    sb.system = name;
    for (const auto& v : ae) {
      sb.median.push_back(quantile(v, 0.5));
      sb.q25.push_back(quantile(v, 0.25));
      sb.q75.push_back(quantile(v, 0.75));
    }
    return sb;
  };
  out.systems.push_back(summarize("model", model_ae));
  if (baseline != nullptr) out.systems.push_back(summarize("baseline", base_ae));
  return out;
}

RegressionStats regression_stats(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("regression inputs differ in length");
  if (pred.size() < 2) throw DegenerateInputError("regression needs at least two points");
  const double n = static_cast<double>(pred.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mx += truth[i];
    my += pred[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = truth[i] - mx;
    const double dy = pred[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw DegenerateInputError("truth values have zero variance");
  RegressionStats r;
  r.n = pred.size();
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  if (syy > 0.0) {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = pred[i] - (r.slope * truth[i] + r.intercept);
      ss_res += e * e;
    }
    r.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  } else {
    r.r_squared = 1.0;  // constant prediction is fit exactly by slope 0
  }
  return r;
}

std::map<std::string, RegressionStats> regression_by_region(const GridSeries& pred, const GridSeries& truth,
                                                            std::span<const RegionMask> masks, MonthRange range) {
  require_coverage(truth, range, "truth series");
  require_coverage(pred, range, "predictions");
  std::map<std::string, RegressionStats> out;
  auto collect = [&](const RegionMask* mask) {
    std::vector<double> p;
    std::vector<double> t;
    for (long k = 0; k < range.size(); ++k) {
      const MonthStamp m = range.first.advanced(k);
      const auto pv = pred[pred.index_of(m)].values();
      const auto tv = truth[truth.index_of(m)].values();
      for (std::size_t c = 0; c < pv.size(); ++c) {
        if (mask != nullptr && mask->weights().values()[c] == 0.0) continue;
        p.push_back(pv[c]);
        t.push_back(tv[c]);
      }
    }
    return regression_stats(p, t);
  };
  out[kGlobalRegion] = collect(nullptr);
  for (const auto& m : masks) out[m.name()] = collect(&m);
  return out;
}

// ---------------------------------------------------------------------------

HeatmapScale emit_heatmap(const GridField& field, const std::filesystem::path& path,
                          std::optional<HeatmapScale> range) {
  field.validate();
  HeatmapScale s;
  if (range) {
    s = *range;
  } else {
    const auto [mn, mx] = std::minmax_element(field.values().begin(), field.values().end());
    s = {*mn, *mx};
  }
  const std::string header =
      "P5 " + std::to_string(field.n_lon()) + " " + std::to_string(field.n_lat()) + " 255\n";
  std::string bytes = header;
  const double span = s.hi - s.lo;
  for (double v : field.values()) {
    std::uint8_t b = 0;
    if (span > 0.0) {
      const double z = std::clamp((v - s.lo) / span, 0.0, 1.0);
      b = static_cast<std::uint8_t>(std::lround(z * 255.0));
    }
    bytes.push_back(static_cast<char>(b));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "format P5\nwidth %zu\nheight %zu\nrows north_to_south\nvalue_at_0 %.17g\nvalue_at_255 %.17g\n"
                "mapping byte = round(255 * clamp((v - value_at_0) / (value_at_255 - value_at_0), 0, 1))\n"
                "degenerate_range_maps_to 0\n",
                field.n_lon(), field.n_lat(), s.lo, s.hi);
  write_text(std::filesystem::path(path.string() + ".txt"), buf);
  return s;
}

}  // namespace seasonet::eval
