#pragma once

// Gridded temperature data model, calendar indexing and error/anomaly math.
//
// Grids are stored row-major, latitude rows first. Row 0 is the northernmost
// row; columns run eastward and wrap around.

#include <array>
#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seasonet/errors.hpp"

namespace seasonet {

struct MonthStamp {
  int year = 1970;
  int month = 1;  // 1..12

  constexpr auto operator<=>(const MonthStamp&) const = default;

  /// Absolute month count since year 0, used for ordering and differences.
  constexpr long serial() const { return static_cast<long>(year) * 12 + (month - 1); }
  static MonthStamp from_serial(long serial);

  MonthStamp advanced(long months) const;

  /// Parses "YYYY-MM".
  static MonthStamp parse(std::string_view text);
  std::string str() const;
};

/// Offset k such that `start` advanced by k months equals `stamp`.
long month_index(MonthStamp start, MonthStamp stamp);

/// Inclusive month range [first, last].
struct MonthRange {
  MonthStamp first;
  MonthStamp last;

  long size() const { return last.serial() - first.serial() + 1; }
  bool contains(MonthStamp m) const { return first <= m && m <= last; }

  /// Parses "YYYY-MM:YYYY-MM" (both ends inclusive).
  static MonthRange parse(std::string_view text);
  std::string str() const;
};

enum class Season { kWinter, kSpring, kSummer, kFall };

/// Meteorological seasons: DJF, MAM, JJA, SON.
Season season_of(int month);
std::string_view season_name(Season s);
inline constexpr std::array<Season, 4> kAllSeasons = {Season::kWinter, Season::kSpring, Season::kSummer,
                                                      Season::kFall};

class GridField {
 public:
  GridField() = default;
  GridField(std::size_t n_lat, std::size_t n_lon, double fill = 0.0);
  /// Throws InvariantError on non-finite values, DimensionError on size mismatch.
  GridField(std::size_t n_lat, std::size_t n_lon, std::vector<double> values);

  std::size_t n_lat() const { return n_lat_; }
  std::size_t n_lon() const { return n_lon_; }
  std::size_t size() const { return values_.size(); }
  bool same_shape(const GridField& o) const { return n_lat_ == o.n_lat_ && n_lon_ == o.n_lon_; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_lon_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * n_lon_ + j]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Checks the finite-values invariant after in-place edits.
  void validate() const;

  bool operator==(const GridField&) const = default;

 private:
  std::size_t n_lat_ = 0;
  std::size_t n_lon_ = 0;
  std::vector<double> values_;
};

/// Consecutive monthly fields anchored at `start`.
class GridSeries {
 public:
  GridSeries() = default;
  GridSeries(MonthStamp start, std::vector<GridField> fields);

  MonthStamp start() const { return start_; }
  MonthStamp end() const { return stamp_at(size() - 1); }
  std::size_t size() const { return fields_.size(); }
  std::size_t n_lat() const { return fields_.empty() ? 0 : fields_.front().n_lat(); }
  std::size_t n_lon() const { return fields_.empty() ? 0 : fields_.front().n_lon(); }

  MonthStamp stamp_at(std::size_t k) const { return start_.advanced(static_cast<long>(k)); }
  /// Index of `stamp`; OutOfRangeError when outside the series.
  std::size_t index_of(MonthStamp stamp) const;
  MonthRange span() const { return {start(), end()}; }

  const GridField& operator[](std::size_t k) const { return fields_[k]; }
  GridField& operator[](std::size_t k) { return fields_[k]; }
  const std::vector<GridField>& fields() const { return fields_; }

  /// Sub-series covering `range`; OutOfRangeError when not contained.
  GridSeries slice(MonthRange range) const;

  bool operator==(const GridSeries&) const = default;

 private:
  MonthStamp start_{};
  std::vector<GridField> fields_;
};

class RegionMask {
 public:
  RegionMask() = default;
  /// Entries must be 0 or 1 and at least one must be 1.
  RegionMask(std::string name, GridField weights);

  const std::string& name() const { return name_; }
  const GridField& weights() const { return weights_; }
  std::size_t n_lat() const { return weights_.n_lat(); }
  std::size_t n_lon() const { return weights_.n_lon(); }
  bool selected(std::size_t i, std::size_t j) const { return weights_(i, j) != 0.0; }
  std::size_t count() const;

  /// Box mask over latitude/longitude index ranges [lat0, lat1) x [lon0, lon1).
  static RegionMask box(std::string name, std::size_t n_lat, std::size_t n_lon, std::size_t lat0, std::size_t lat1,
                        std::size_t lon0, std::size_t lon1);

 private:
  std::string name_;
  GridField weights_;
};

struct Climatology {
  std::array<GridField, 12> months;  // index 0 = January
  MonthRange base_range;

  const GridField& for_month(int month) const { return months[static_cast<std::size_t>(month - 1)]; }
};

/// Unweighted mean absolute difference over all cells.
double mae(const GridField& pred, const GridField& truth);

/// Mean absolute difference over cells selected by `mask`.
double masked_mae(const GridField& pred, const GridField& truth, const RegionMask& mask);

/// Cosine-latitude weighted MAE. Optional statistic; never used for the headline numbers.
double area_weighted_mae(const GridField& pred, const GridField& truth);

/// Latitude in degrees of row `i` (cell centres, north to south).
double row_latitude(std::size_t i, std::size_t n_lat);

Climatology monthly_climatology(const GridSeries& series, MonthRange base_range);
GridSeries anomaly_series(const GridSeries& series, const Climatology& clim);

}  // namespace seasonet
