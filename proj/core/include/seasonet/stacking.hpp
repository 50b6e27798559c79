#pragma once

// Temporal input windows and sample assembly.
//
// Sequential cases stack the L months before the target (t-1 .. t-L).
// Periodic cases stack t-1 plus, for each lag year k = 1..Y, the months
// 12k-dt .. 12k+dt before the target.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seasonet/dataio.hpp"
#include "seasonet/grid.hpp"

namespace seasonet::stacking {

enum class Family { kSequential, kPeriodic };

struct TemporalCase {
  Family family = Family::kSequential;
  int window_len = 0;       // sequential only: 6, 12, ..., 36
  int lag_years = 0;        // periodic only: 1..4
  int neighbor_months = 0;  // periodic only: 1 or 2

  /// "seq-24", "y3m2", ...
  std::string id() const;
  /// Human label as used in result tables ("24 months", "3 years 2 months").
  std::string label() const;

  static TemporalCase parse(std::string_view id);
  bool operator==(const TemporalCase&) const = default;
};

/// The 14 legal cases in canonical order: seq-6..seq-36, then y1m1, y1m2, ..., y4m2.
const std::vector<TemporalCase>& enumerate_cases();

/// Position of a case in canonical order.
std::size_t canonical_index(std::string_view id);

std::vector<int> offsets(const TemporalCase& c);
int max_offset(const TemporalCase& c);
int channel_count(const TemporalCase& c, bool elevation);

/// Target indices t with max_offset <= t < series length.
std::vector<std::size_t> valid_targets(const GridSeries& series, const TemporalCase& c);
std::vector<std::size_t> valid_targets(std::size_t series_length, const TemporalCase& c);

struct Sample {
  std::size_t channels = 0;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<float> input;  // channels x n_lat x n_lon, normalized
  GridField target;          // degC
  MonthStamp target_stamp;
  std::string case_id;
};

/// Input channels only, for a target that may lie one month past the series end.
/// InsufficientHistoryError when the window reaches before the series start.
std::vector<float> assemble_input(const GridSeries& series, const dataio::ElevationField* elevation,
                                  const dataio::NormStats& norm, const TemporalCase& c, long target_index);

/// Channel c holds normalized series[target - offsets[c]]; the elevation channel,
/// when present, comes last.
Sample assemble_sample(const GridSeries& series, const dataio::ElevationField* elevation,
                       const dataio::NormStats& norm, const TemporalCase& c, std::size_t target_index);

/// All samples whose targets fall in `targets` (defaults to every valid target).
std::vector<Sample> assemble_samples(const GridSeries& series, const dataio::ElevationField* elevation,
                                     const dataio::NormStats& norm, const TemporalCase& c,
                                     std::optional<MonthRange> target_range = std::nullopt);

}  // namespace seasonet::stacking
