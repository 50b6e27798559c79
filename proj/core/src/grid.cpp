#include "seasonet/grid.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <numbers>

namespace seasonet {

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ConfigError("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return value;
}

void require_same_shape(const GridField& a, const GridField& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + std::to_string(a.n_lat()) + "x" + std::to_string(a.n_lon()) +
                         " vs " + std::to_string(b.n_lat()) + "x" + std::to_string(b.n_lon()));
  }
}

}  // namespace

MonthStamp MonthStamp::from_serial(long serial) {
  long year = serial / 12;
  long rem = serial % 12;
  if (rem < 0) {
    rem += 12;
    --year;
  }
  return {static_cast<int>(year), static_cast<int>(rem) + 1};
}

MonthStamp MonthStamp::advanced(long months) const { return from_serial(serial() + months); }

MonthStamp MonthStamp::parse(std::string_view text) {
  const auto dash = text.rfind('-');
  if (dash == std::string_view::npos || dash == 0) {
    throw ConfigError("expected YYYY-MM, got '" + std::string(text) + "'");
  }
  MonthStamp m{parse_int(text.substr(0, dash), "year"), parse_int(text.substr(dash + 1), "month")};
  if (m.month < 1 || m.month > 12) throw ConfigError("month out of range in '" + std::string(text) + "'");
  return m;
}

std::string MonthStamp::str() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

long month_index(MonthStamp start, MonthStamp stamp) {
  const long k = stamp.serial() - start.serial();
  if (k < 0) throw OutOfRangeError(stamp.str() + " precedes series start " + start.str());
  return k;
}

MonthRange MonthRange::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("expected YYYY-MM:YYYY-MM, got '" + std::string(text) + "'");
  MonthRange r{MonthStamp::parse(text.substr(0, colon)), MonthStamp::parse(text.substr(colon + 1))};
  if (r.last < r.first) throw ConfigError("empty month range '" + std::string(text) + "'");
  return r;
}

std::string MonthRange::str() const { return first.str() + ":" + last.str(); }

Season season_of(int month) {
  switch (month) {
    case 12:
    case 1:
    case 2:
      return Season::kWinter;
    case 3:
    case 4:
    case 5:
      return Season::kSpring;
    case 6:
    case 7:
    case 8:
      return Season::kSummer;
    default:
      return Season::kFall;
  }
}

std::string_view season_name(Season s) {
  switch (s) {
    case Season::kWinter:
      return "Winter";
    case Season::kSpring:
      return "Spring";
    case Season::kSummer:
      return "Summer";
    case Season::kFall:
      return "Fall";
  }
  return "?";
}

// ---------------------------------------------------------------------------

GridField::GridField(std::size_t n_lat, std::size_t n_lon, double fill)
    : n_lat_(n_lat), n_lon_(n_lon), values_(n_lat * n_lon, fill) {
  if (n_lat == 0 || n_lon == 0) throw DimensionError("grid dimensions must be >= 1");
  if (!std::isfinite(fill)) throw InvariantError("grid fill value is not finite");
}

GridField::GridField(std::size_t n_lat, std::size_t n_lon, std::vector<double> values)
    : n_lat_(n_lat), n_lon_(n_lon), values_(std::move(values)) {
  if (n_lat == 0 || n_lon == 0) throw DimensionError("grid dimensions must be >= 1");
  if (values_.size() != n_lat * n_lon) {
    throw DimensionError("grid expects " + std::to_string(n_lat * n_lon) + " values, got " +
                         std::to_string(values_.size()));
  }
  validate();
}

void GridField::validate() const {
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) {
      throw InvariantError("non-finite grid value at row " + std::to_string(k / n_lon_) + ", column " +
                           std::to_string(k % n_lon_));
    }
  }
}

GridSeries::GridSeries(MonthStamp start, std::vector<GridField> fields) : start_(start), fields_(std::move(fields)) {
  if (start.month < 1 || start.month > 12) throw InvariantError("series start month out of range");
  if (fields_.empty()) throw InvariantError("series must hold at least one month");
  for (const auto& f : fields_) {
    if (!f.same_shape(fields_.front())) throw DimensionError("series fields do not share one grid shape");
  }
}

std::size_t GridSeries::index_of(MonthStamp stamp) const {
  const long k = month_index(start_, stamp);
  if (static_cast<std::size_t>(k) >= fields_.size()) {
    throw OutOfRangeError(stamp.str() + " is past series end " + end().str());
  }
  return static_cast<std::size_t>(k);
}

GridSeries GridSeries::slice(MonthRange range) const {
  const auto a = index_of(range.first);
  const auto b = index_of(range.last);
  if (b < a) throw OutOfRangeError("empty slice " + range.str());
  return GridSeries(range.first, std::vector<GridField>(fields_.begin() + static_cast<long>(a),
                                                        fields_.begin() + static_cast<long>(b) + 1));
}

RegionMask::RegionMask(std::string name, GridField weights) : name_(std::move(name)), weights_(std::move(weights)) {
  bool any = false;
  for (double w : weights_.values()) {
    if (w != 0.0 && w != 1.0) throw InvariantError("mask '" + name_ + "' has a value outside {0,1}");
    any = any || w == 1.0;
  }
  if (!any) throw DegenerateInputError("mask '" + name_ + "' selects no cells");
}

std::size_t RegionMask::count() const {
  std::size_t n = 0;
  for (double w : weights_.values()) n += (w != 0.0);
  return n;
}

RegionMask RegionMask::box(std::string name, std::size_t n_lat, std::size_t n_lon, std::size_t lat0, std::size_t lat1,
                           std::size_t lon0, std::size_t lon1) {
  if (lat1 > n_lat || lon1 > n_lon || lat0 >= lat1 || lon0 >= lon1) {
    throw OutOfRangeError("mask box outside the grid");
  }
  GridField w(n_lat, n_lon, 0.0);
  for (std::size_t i = lat0; i < lat1; ++i)
    for (std::size_t j = lon0; j < lon1; ++j) w(i, j) = 1.0;
  return RegionMask(std::move(name), std::move(w));
}

// ---------------------------------------------------------------------------

double mae(const GridField& pred, const GridField& truth) {
  require_same_shape(pred, truth, "mae");
  // (1/D) sum_j (1/M) sum_i |x_ij - y_ij|, accumulated per longitude column.
  const std::size_t m = pred.n_lat();
  const std::size_t d = pred.n_lon();
  double outer = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double inner = 0.0;
    for (std::size_t i = 0; i < m; ++i) inner += std::abs(pred(i, j) - truth(i, j));
    outer += inner / static_cast<double>(m);
  }
  return outer / static_cast<double>(d);
}

double masked_mae(const GridField& pred, const GridField& truth, const RegionMask& mask) {
  require_same_shape(pred, truth, "masked_mae");
  require_same_shape(pred, mask.weights(), "masked_mae mask");
  double sum = 0.0;
  std::size_t n = 0;
  const auto p = pred.values();
  const auto t = truth.values();
  const auto w = mask.weights().values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (w[k] != 0.0) {
      sum += std::abs(p[k] - t[k]);
      ++n;
    }
  }
  if (n == 0) throw DegenerateInputError("masked_mae: mask '" + mask.name() + "' selects no cells");
  if (n == p.size()) return mae(pred, truth);
  return sum / static_cast<double>(n);
}

double row_latitude(std::size_t i, std::size_t n_lat) {
  return 90.0 - (static_cast<double>(i) + 0.5) * 180.0 / static_cast<double>(n_lat);
}

double area_weighted_mae(const GridField& pred, const GridField& truth) {
  require_same_shape(pred, truth, "area_weighted_mae");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.n_lat(); ++i) {
    const double w = std::cos(row_latitude(i, pred.n_lat()) * std::numbers::pi / 180.0);
    for (std::size_t j = 0; j < pred.n_lon(); ++j) {
      num += w * std::abs(pred(i, j) - truth(i, j));
      den += w;
    }
  }
  return num / den;
}

Climatology monthly_climatology(const GridSeries& series, MonthRange base_range) {
  const auto a = series.index_of(base_range.first);
  const auto b = series.index_of(base_range.last);
  std::array<std::vector<double>, 12> sums;
  std::array<std::size_t, 12> counts{};
  const std::size_t cells = series.n_lat() * series.n_lon();
  for (auto& s : sums) s.assign(cells, 0.0);
  for (std::size_t k = a; k <= b; ++k) {
    const auto m = static_cast<std::size_t>(series.stamp_at(k).month - 1);
    const auto v = series[k].values();
    for (std::size_t c = 0; c < cells; ++c) sums[m][c] += v[c];
    ++counts[m];
  }
  Climatology clim;
  clim.base_range = base_range;
  for (std::size_t m = 0; m < 12; ++m) {
    if (counts[m] == 0) {
      throw CoverageError("climatology base range " + base_range.str() + " never contains calendar month " +
                          std::to_string(m + 1));
    }
    for (auto& v : sums[m]) v /= static_cast<double>(counts[m]);
    clim.months[m] = GridField(series.n_lat(), series.n_lon(), std::move(sums[m]));
  }
  return clim;
}

GridSeries anomaly_series(const GridSeries& series, const Climatology& clim) {
  std::vector<GridField> out;
  out.reserve(series.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    const GridField& ref = clim.for_month(series.stamp_at(k).month);
    require_same_shape(series[k], ref, "anomaly_series");
    GridField a = series[k];
    auto av = a.values();
    const auto rv = ref.values();
    for (std::size_t c = 0; c < av.size(); ++c) av[c] -= rv[c];
    out.push_back(std::move(a));
  }
  return GridSeries(series.start(), std::move(out));
}

}  // namespace seasonet
