#pragma once

// Forecast verification: per-month grid MAE, regional and seasonal
// aggregation, per-cell error fields, persistence and ensemble-mean
// baselines, case ranking, anomaly-binned error statistics, regression
// diagnostics and PGM heatmaps.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seasonet/grid.hpp"

namespace seasonet::eval {

inline constexpr const char* kGlobalRegion = "global";

/// Error statistics of one forecasting system over an evaluation range.
struct SystemScores {
  std::string system;
  double overall_mae = 0.0;  // mean over months of the global grid MAE
  std::map<std::string, double> per_region_mae;
  std::map<std::string, double> per_season_mae;
  std::map<std::string, std::map<std::string, double>> per_region_season_mae;
  std::map<std::string, std::vector<double>> mae_time_series;  // region -> one value per month; includes "global"
  GridField mae_field;                                         // per-cell time-mean absolute error
  std::map<std::string, GridField> seasonal_mae_fields;        // season -> per-cell mean over that season's months
};

struct EvalReport {
  std::string case_id;
  std::string checkpoint_id;
  MonthRange eval_range;
  std::optional<MonthRange> climatology_base_range;
  std::vector<std::string> regions;  // region order used in the tables
  std::string overall_rank_rule = "mean MAE over region x season cells";
  SystemScores model;
  std::vector<SystemScores> baselines;

  const SystemScores* baseline(const std::string& name) const;
};

using Predictor = std::function<GridField(MonthStamp)>;

struct EvalOptions {
  std::vector<GridSeries> ensemble_members;  // empty: no ensemble-mean baseline
  bool persistence_baseline = true;
  std::string case_id;
  std::string checkpoint_id;
  std::string system_name = "model";
};

/// Persistence forecast: the truth field one month before `target_index`.
GridField persistence_forecast(const GridSeries& series, std::size_t target_index);

/// Scores precomputed predictions (covering `range`) against `truth`.
SystemScores score_system(const std::string& name, const GridSeries& predictions, const GridSeries& truth,
                          std::span<const RegionMask> masks, MonthRange range);

/// Runs `predictor` over `range` and scores it plus the requested baselines.
EvalReport evaluate(const Predictor& predictor, const GridSeries& truth, std::span<const RegionMask> masks,
                    MonthRange range, const EvalOptions& opts = {});

/// Same, from predictions already materialized.
EvalReport evaluate_series(const GridSeries& predictions, const GridSeries& truth, std::span<const RegionMask> masks,
                           MonthRange range, const EvalOptions& opts = {});

/// Baseline-only report (the baseline becomes the scored system).
EvalReport persistence_report(const GridSeries& truth, std::span<const RegionMask> masks, MonthRange range);
EvalReport ensemble_report(std::span<const GridSeries> members, const GridSeries& truth,
                           std::span<const RegionMask> masks, MonthRange range);

// ---------------------------------------------------------------------------

struct RankTable {
  std::vector<std::string> case_ids;  // canonical case order
  std::vector<std::string> columns;   // "<region>/<season>" cells, then "overall"
  std::vector<std::vector<double>> mae;  // [case][column]
  std::vector<std::vector<int>> rank;    // [case][column], 1 = lowest MAE
  std::string overall_rule = "mean MAE over region x season cells";

  int rank_of(const std::string& case_id, const std::string& column) const;
};

/// Ranks the 14 temporal cases within every region x season cell and overall.
/// Ties are broken by canonical case order.
RankTable rank_cases(std::span<const EvalReport> reports);

/// Report holding a single region/season cell, for feeding published tables to rank_cases.
EvalReport single_cell_report(const std::string& case_id, double mae);

// ---------------------------------------------------------------------------

struct SystemBins {
  std::string system;
  std::vector<double> median;  // NaN for empty bins
  std::vector<double> q25;
  std::vector<double> q75;
};

struct BinStats {
  std::vector<double> edges;          // bins [e_k, e_k+1); the last bin also includes its right edge
  std::vector<std::size_t> counts;    // pairs per bin (shared by all systems)
  std::size_t total_pairs = 0;        // (cell, month) pairs in the overlap
  std::size_t pairs_in_range = 0;
  std::vector<SystemBins> systems;    // model first, then baseline if given
};

/// Integer bins from -10 to +10 degC.
std::vector<double> default_anomaly_edges();

/// Linear-interpolation quantile of an unsorted sample (q in [0,1]).
double quantile(std::vector<double> values, double q);

BinStats binned_abs_error(const GridSeries& pred, const GridSeries& truth, const Climatology& clim,
                          std::span<const double> edges, const GridSeries* baseline = nullptr);

struct RegressionStats {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Least-squares fit pred = slope * truth + intercept.
RegressionStats regression_stats(std::span<const double> pred, std::span<const double> truth);

/// Regression over all (cell, month) pairs inside each mask, for months in `range`.
std::map<std::string, RegressionStats> regression_by_region(const GridSeries& pred, const GridSeries& truth,
                                                            std::span<const RegionMask> masks, MonthRange range);

// ---------------------------------------------------------------------------

struct HeatmapScale {
  double lo = 0.0;
  double hi = 0.0;
};

/// Binary PGM (P5, maxval 255), rows north to south, value mapped linearly from
/// [lo, hi] (field min/max by default) to [0, 255]; a degenerate range maps to 0.
/// The mapping goes into "<path>.txt".
HeatmapScale emit_heatmap(const GridField& field, const std::filesystem::path& path,
                          std::optional<HeatmapScale> range = std::nullopt);

// ---------------------------------------------------------------------------
// Serialization (JSON documents and flat CSV tables).

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
std::string report_to_csv(const EvalReport& r);
std::string rank_table_to_json(const RankTable& t);
std::string rank_table_to_csv(const RankTable& t);
std::string bin_stats_to_json(const BinStats& b);
std::string regression_to_json(const std::map<std::string, RegressionStats>& r);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace seasonet::eval
