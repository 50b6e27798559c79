#include "seasonet/stacking.hpp"

#include <algorithm>
#include <charconv>

namespace seasonet::stacking {

std::string TemporalCase::id() const {
  if (family == Family::kSequential) return "seq-" + std::to_string(window_len);
  return "y" + std::to_string(lag_years) + "m" + std::to_string(neighbor_months);
}

std::string TemporalCase::label() const {
  if (family == Family::kSequential) return std::to_string(window_len) + " months";
  return std::to_string(lag_years) + (lag_years == 1 ? " year " : " years ") + std::to_string(neighbor_months) +
         (neighbor_months == 1 ? " month" : " months");
}

namespace {

bool parse_digits(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

TemporalCase TemporalCase::parse(std::string_view id) {
  for (const auto& c : enumerate_cases()) {
    if (c.id() == id) return c;
  }
  // Well-formed but illegal ids (e.g. y5m1) get a specific message.
  int a = 0;
  int b = 0;
  if (id.starts_with("seq-") && parse_digits(id.substr(4), a)) {
    throw ConfigError("sequential window " + std::to_string(a) + " is not one of 6, 12, 18, 24, 30, 36");
  }
  if (id.size() >= 4 && id[0] == 'y') {
    const auto m = id.find('m');
    if (m != std::string_view::npos && parse_digits(id.substr(1, m - 1), a) && parse_digits(id.substr(m + 1), b)) {
      throw ConfigError("periodic case '" + std::string(id) + "' outside lag years 1..4 / neighbour months 1..2");
    }
  }
  throw ConfigError("unknown temporal case '" + std::string(id) + "'");
}

const std::vector<TemporalCase>& enumerate_cases() {
  static const std::vector<TemporalCase> cases = [] {
    std::vector<TemporalCase> v;
    for (int len = 6; len <= 36; len += 6) v.push_back({Family::kSequential, len, 0, 0});
    for (int y = 1; y <= 4; ++y)
      for (int dt = 1; dt <= 2; ++dt) v.push_back({Family::kPeriodic, 0, y, dt});
    return v;
  }();
  return cases;
}

std::size_t canonical_index(std::string_view id) {
  const auto& cs = enumerate_cases();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (cs[i].id() == id) return i;
  }
  throw ConfigError("unknown temporal case '" + std::string(id) + "'");
}

std::vector<int> offsets(const TemporalCase& c) {
  std::vector<int> out;
  if (c.family == Family::kSequential) {
    for (int k = 1; k <= c.window_len; ++k) out.push_back(k);
    return out;
  }
  out.push_back(1);
  for (int k = 1; k <= c.lag_years; ++k)
    for (int d = -c.neighbor_months; d <= c.neighbor_months; ++d) out.push_back(12 * k + d);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int max_offset(const TemporalCase& c) { return offsets(c).back(); }

int channel_count(const TemporalCase& c, bool elevation) {
  return static_cast<int>(offsets(c).size()) + (elevation ? 1 : 0);
}

std::vector<std::size_t> valid_targets(std::size_t series_length, const TemporalCase& c) {
  const auto first = static_cast<std::size_t>(max_offset(c));
  if (series_length <= first) {
    throw InsufficientHistoryError("case " + c.id() + " needs at least " + std::to_string(first + 1) +
                                   " months, series has " + std::to_string(series_length));
  }
  std::vector<std::size_t> out;
  out.reserve(series_length - first);
  for (std::size_t t = first; t < series_length; ++t) out.push_back(t);
  return out;
}

std::vector<std::size_t> valid_targets(const GridSeries& series, const TemporalCase& c) {
  return valid_targets(series.size(), c);
}

std::vector<float> assemble_input(const GridSeries& series, const dataio::ElevationField* elevation,
                                  const dataio::NormStats& norm, const TemporalCase& c, long target_index) {
  const auto offs = offsets(c);
  if (target_index < offs.back()) {
    throw InsufficientHistoryError("case " + c.id() + " needs " + std::to_string(offs.back()) +
                                   " months of history before target index " + std::to_string(target_index));
  }
  if (target_index > static_cast<long>(series.size())) {
    throw OutOfRangeError("target index " + std::to_string(target_index) + " is more than one month past the series");
  }
  if (elevation != nullptr &&
      (elevation->field.n_lat() != series.n_lat() || elevation->field.n_lon() != series.n_lon())) {
    throw DimensionError("elevation grid does not match series grid");
  }
  const std::size_t plane = series.n_lat() * series.n_lon();
  const std::size_t channels = offs.size() + (elevation != nullptr ? 1 : 0);
  std::vector<float> input(channels * plane);
  for (std::size_t ch = 0; ch < offs.size(); ++ch) {
    const auto src = series[static_cast<std::size_t>(target_index - offs[ch])].values();
    float* dst = input.data() + ch * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = static_cast<float>(norm.normalize(src[k]));
  }
  if (elevation != nullptr) {
    const auto src = elevation->field.values();
    float* dst = input.data() + offs.size() * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = static_cast<float>(norm.normalize_elevation(src[k]));
  }
  return input;
}

Sample assemble_sample(const GridSeries& series, const dataio::ElevationField* elevation,
                       const dataio::NormStats& norm, const TemporalCase& c, std::size_t target_index) {
  if (target_index >= series.size() || target_index < static_cast<std::size_t>(max_offset(c))) {
    throw OutOfRangeError("target index " + std::to_string(target_index) + " is not a valid target for case " +
                          c.id() + " on a series of length " + std::to_string(series.size()));
  }
  Sample s;
  s.input = assemble_input(series, elevation, norm, c, static_cast<long>(target_index));
  s.n_lat = series.n_lat();
  s.n_lon = series.n_lon();
  s.channels = s.input.size() / (s.n_lat * s.n_lon);
  s.case_id = c.id();
  s.target = series[target_index];
  s.target_stamp = series.stamp_at(target_index);
  return s;
}

std::vector<Sample> assemble_samples(const GridSeries& series, const dataio::ElevationField* elevation,
                                     const dataio::NormStats& norm, const TemporalCase& c,
                                     std::optional<MonthRange> target_range) {
  std::vector<Sample> out;
  for (std::size_t t : valid_targets(series, c)) {
    if (target_range && !target_range->contains(series.stamp_at(t))) continue;
    out.push_back(assemble_sample(series, elevation, norm, c, t));
  }
  return out;
}

}  // namespace seasonet::stacking
