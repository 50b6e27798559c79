#include "seasonet/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace seasonet::dataio {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'G', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[off + static_cast<std::size_t>(b)]) << (8 * b);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v == 0 || v > 0xFFFFFFFFu) throw InvariantError(std::string("CGT ") + what + " out of range");
  return static_cast<std::uint32_t>(v);
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

constexpr double kKelvinOffset = 273.15;

}  // namespace

std::vector<std::uint8_t> encode_cgt(CgtKind kind, MonthStamp start, std::span<const GridField> frames) {
  if (frames.empty()) throw InvariantError("CGT needs at least one frame");
  if (start.month < 1 || start.month > 12) throw InvariantError("CGT start month out of range");
  if (kind != CgtKind::kTemperature && frames.size() != 1) {
    throw InvariantError("CGT elevation and mask objects require n_time = 1, got " + std::to_string(frames.size()));
  }
  const auto n_lat = frames.front().n_lat();
  const auto n_lon = frames.front().n_lon();
  for (const auto& f : frames) {
    if (f.n_lat() != n_lat || f.n_lon() != n_lon) throw DimensionError("CGT frames differ in shape");
  }

  std::vector<std::uint8_t> out;
  out.reserve(kCgtHeaderSize + frames.size() * n_lat * n_lon * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, checked_u32(frames.size(), "n_time"));
  put_u32(out, checked_u32(n_lat, "n_lat"));
  put_u32(out, checked_u32(n_lon, "n_lon"));
  put_u32(out, static_cast<std::uint32_t>(start.year));
  out.push_back(static_cast<std::uint8_t>(start.month));
  out.push_back(static_cast<std::uint8_t>(kind));
  out.push_back(0);
  out.push_back(0);
  for (const auto& f : frames) {
    for (double v : f.values()) {
      const auto x = static_cast<float>(v);
      if (kind == CgtKind::kMask && x != 0.0f && x != 1.0f) throw InvariantError("mask values must be 0 or 1");
      put_u32(out, std::bit_cast<std::uint32_t>(x));
    }
  }
  return out;
}

CgtObject decode_cgt(std::span<const std::uint8_t> bytes, const ReadOptions& opts) {
  using K = ParseError::Kind;
  if (bytes.size() < kCgtHeaderSize) {
    throw ParseError(K::kTruncated, bytes.size(), "CGT header truncated");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw ParseError(K::kBadMagic, 0, "bad CGT magic");
  }
  const std::uint32_t n_time = get_u32(bytes, 4);
  const std::uint32_t n_lat = get_u32(bytes, 8);
  const std::uint32_t n_lon = get_u32(bytes, 12);
  const auto year = static_cast<std::int32_t>(get_u32(bytes, 16));
  const std::uint8_t month = bytes[20];
  const std::uint8_t kind_byte = bytes[21];
  if (n_time == 0) throw ParseError(K::kShape, 4, "n_time must be >= 1");
  if (n_lat == 0) throw ParseError(K::kShape, 8, "n_lat must be >= 1");
  if (n_lon == 0) throw ParseError(K::kShape, 12, "n_lon must be >= 1");
  if (month < 1 || month > 12) throw ParseError(K::kBadMonth, 20, "start month " + std::to_string(month) + " not in 1..12");
  if (kind_byte > 2) throw ParseError(K::kBadKind, 21, "unknown CGT kind " + std::to_string(kind_byte));
  const auto kind = static_cast<CgtKind>(kind_byte);
  if (kind != CgtKind::kTemperature && n_time != 1) {
    throw ParseError(K::kShape, 4, "elevation/mask CGT requires n_time = 1");
  }

  const std::uint64_t cells = static_cast<std::uint64_t>(n_lat) * n_lon;
  const std::uint64_t expected = kCgtHeaderSize + static_cast<std::uint64_t>(n_time) * cells * 4;
  if (bytes.size() < expected) {
    throw ParseError(K::kTruncated, bytes.size(),
                     "CGT payload truncated: expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw ParseError(K::kShape, expected, "trailing bytes after CGT payload");
  }

  std::vector<GridField> frames;
  frames.reserve(n_time);
  std::size_t off = kCgtHeaderSize;
  for (std::uint32_t t = 0; t < n_time; ++t) {
    std::vector<double> values(cells);
    for (std::uint64_t c = 0; c < cells; ++c, off += 4) {
      const float x = std::bit_cast<float>(get_u32(bytes, off));
      if (!std::isfinite(x)) throw ParseError(K::kNonFinite, off, "non-finite value in CGT payload");
      if (kind == CgtKind::kMask && x != 0.0f && x != 1.0f) {
        throw ParseError(K::kMaskDomain, off, "mask value " + std::to_string(x) + " outside {0,1}");
      }
      double v = x;
      if (kind == CgtKind::kTemperature && opts.kelvin_input) v -= kKelvinOffset;
      values[c] = v;
    }
    frames.emplace_back(n_lat, n_lon, std::move(values));
  }

  switch (kind) {
    case CgtKind::kTemperature:
      return GridSeries(MonthStamp{year, month}, std::move(frames));
    case CgtKind::kElevation:
      return ElevationField{std::move(frames.front())};
    case CgtKind::kMask:
      try {
        return RegionMask(opts.mask_name.empty() ? "mask" : opts.mask_name, std::move(frames.front()));
      } catch (const DegenerateInputError& e) {
        throw ParseError(K::kMaskDomain, kCgtHeaderSize, e.what());
      }
  }
  throw ParseError(K::kBadKind, 21, "unknown CGT kind");
}

CgtObject read_cgt(const std::filesystem::path& path, const ReadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ReadOptions o = opts;
  if (o.mask_name.empty()) o.mask_name = path.stem().string();
  try {
    return decode_cgt(bytes, o);
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

GridSeries read_series(const std::filesystem::path& path, const ReadOptions& opts) {
  auto obj = read_cgt(path, opts);
  if (auto* s = std::get_if<GridSeries>(&obj)) return std::move(*s);
  throw ParseError(ParseError::Kind::kBadKind, 21, path.string() + ": expected a temperature series");
}

ElevationField read_elevation(const std::filesystem::path& path) {
  auto obj = read_cgt(path);
  if (auto* e = std::get_if<ElevationField>(&obj)) return std::move(*e);
  throw ParseError(ParseError::Kind::kBadKind, 21, path.string() + ": expected an elevation field");
}

RegionMask read_mask(const std::filesystem::path& path, const std::string& name) {
  ReadOptions o;
  o.mask_name = name;
  auto obj = read_cgt(path, o);
  if (auto* m = std::get_if<RegionMask>(&obj)) return std::move(*m);
  throw ParseError(ParseError::Kind::kBadKind, 21, path.string() + ": expected a region mask");
}

void write_cgt(const GridSeries& series, const std::filesystem::path& path) {
  write_bytes(encode_cgt(CgtKind::kTemperature, series.start(), series.fields()), path);
}

void write_cgt(const ElevationField& elevation, const std::filesystem::path& path) {
  write_bytes(encode_cgt(CgtKind::kElevation, MonthStamp{0, 1}, std::span(&elevation.field, 1)), path);
}

void write_cgt(const RegionMask& mask, const std::filesystem::path& path) {
  write_bytes(encode_cgt(CgtKind::kMask, MonthStamp{0, 1}, std::span(&mask.weights(), 1)), path);
}

// ---------------------------------------------------------------------------

void NormStats::validate() const {
  if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw DegenerateInputError("normalization std must be positive and finite");
  }
  if (!(elevation_std > 0.0) || !std::isfinite(elevation_std) || !std::isfinite(elevation_mean)) {
    throw DegenerateInputError("elevation std must be positive and finite");
  }
}

namespace {

std::pair<double, double> population_moments(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace

NormStats compute_norm_stats(std::span<const GridSeries> train_series, const ElevationField* elevation,
                             std::string computed_over) {
  if (train_series.empty()) throw ConfigError("compute_norm_stats needs at least one series");
  // Two passes over every value: mean, then centred sum of squares.
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : train_series)
    for (const auto& f : s.fields())
      for (double v : f.values()) {
        sum += v;
        ++n;
      }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : train_series)
    for (const auto& f : s.fields())
      for (double v : f.values()) ss += (v - mean) * (v - mean);
  NormStats st;
  st.mean = mean;
  st.std = std::sqrt(ss / static_cast<double>(n));
  st.computed_over = std::move(computed_over);
  if (!(st.std > 0.0)) throw DegenerateInputError("training data is constant; std = 0");
  if (elevation != nullptr) {
    auto [em, es] = population_moments(elevation->field.values());
    if (!(es > 0.0)) throw DegenerateInputError("elevation field is constant; std = 0");
    st.elevation_mean = em;
    st.elevation_std = es;
  }
  return st;
}

GridField normalize(const GridField& field, const NormStats& stats) {
  GridField out = field;
  for (double& v : out.values()) v = stats.normalize(v);
  return out;
}

GridField denormalize(const GridField& field, const NormStats& stats) {
  GridField out = field;
  for (double& v : out.values()) v = stats.denormalize(v);
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_lat == 0 || n_lon == 0 || n_lat % 8 != 0 || n_lon % 8 != 0) {
    throw ConfigError("synthetic grid must be non-empty with n_lat and n_lon divisible by 8");
  }
  if (n_years == 0) throw ConfigError("synthetic series needs at least one year");
  if (phase_month < 1 || phase_month > 12) throw ConfigError("phase_month must be in 1..12");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(elevation_scale >= 0.0)) throw ConfigError("elevation_scale must be >= 0");
  if (start.month < 1 || start.month > 12) throw ConfigError("start month out of range");
}

GridField synthetic_elevation_km(const SyntheticConfig& cfg) {
  // Three Gaussian bumps; longitude distance wraps so the field is periodic east-west.
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  struct Bump {
    double lat, lon, radius, height;
  };
  std::array<Bump, 3> bumps{};
  for (auto& b : bumps) {
    b.lat = -60.0 + 120.0 * uni(rng);
    b.lon = 360.0 * uni(rng);
    b.radius = 10.0 + 20.0 * uni(rng);
    b.height = 0.4 + 0.6 * uni(rng);
  }
  GridField elev(cfg.n_lat, cfg.n_lon, 0.0);
  for (std::size_t i = 0; i < cfg.n_lat; ++i) {
    const double lat = row_latitude(i, cfg.n_lat);
    for (std::size_t j = 0; j < cfg.n_lon; ++j) {
      const double lon = (static_cast<double>(j) + 0.5) * 360.0 / static_cast<double>(cfg.n_lon);
      double h = 0.0;
      for (const auto& b : bumps) {
        double dlon = std::abs(lon - b.lon);
        dlon = std::min(dlon, 360.0 - dlon);
        const double d2 = (lat - b.lat) * (lat - b.lat) + dlon * dlon;
        h += b.height * std::exp(-d2 / (2.0 * b.radius * b.radius));
      }
      elev(i, j) = cfg.elevation_scale * h;
    }
  }
  return elev;
}

double synthetic_mean_value(const SyntheticConfig& cfg, std::size_t row, std::size_t t, double elevation_km) {
  const double abs_lat = std::abs(row_latitude(row, cfg.n_lat));
  const int month = cfg.start.advanced(static_cast<long>(t)).month;
  const double amplitude = cfg.seasonal_amplitude_pole * abs_lat / 90.0;
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(month - cfg.phase_month) / 12.0;
  return (cfg.base_equator - cfg.pole_drop * abs_lat / 90.0) + amplitude * std::cos(phase) +
         cfg.trend * (static_cast<double>(t) / 120.0) - cfg.lapse_rate * elevation_km;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const GridField elev_km = synthetic_elevation_km(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n_time = cfg.n_years * 12;
  std::vector<GridField> fields;
  fields.reserve(n_time);
  for (std::size_t t = 0; t < n_time; ++t) {
    GridField f(cfg.n_lat, cfg.n_lon, 0.0);
    for (std::size_t i = 0; i < cfg.n_lat; ++i) {
      for (std::size_t j = 0; j < cfg.n_lon; ++j) {
        double v = synthetic_mean_value(cfg, i, t, elev_km(i, j));
        if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
        // CGT carries float32; round here so in-memory and on-disk data agree bit for bit.
        f(i, j) = static_cast<double>(static_cast<float>(v));
      }
    }
    fields.push_back(std::move(f));
  }
  GridField elev_m = elev_km;
  for (double& v : elev_m.values()) v = static_cast<double>(static_cast<float>(v * 1000.0));
  return {GridSeries(cfg.start, std::move(fields)), ElevationField{std::move(elev_m)}};
}

// ---------------------------------------------------------------------------

GridSeries ensemble_mean(std::span<const GridSeries> members) {
  if (members.empty()) throw ConfigError("ensemble_mean needs at least one member");
  const auto& ref = members.front();
  for (const auto& m : members) {
    if (m.start() != ref.start() || m.size() != ref.size()) {
      throw AlignmentError("ensemble member spans " + m.span().str() + ", expected " + ref.span().str());
    }
    if (m.n_lat() != ref.n_lat() || m.n_lon() != ref.n_lon()) throw AlignmentError("ensemble members differ in grid");
  }
  // Per-cell values are summed in sorted order so the result does not depend on member order.
  std::vector<GridField> out;
  out.reserve(ref.size());
  const auto n = static_cast<double>(members.size());
  std::vector<double> cell(members.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    GridField f(ref.n_lat(), ref.n_lon(), 0.0);
    auto fv = f.values();
    for (std::size_t c = 0; c < fv.size(); ++c) {
      for (std::size_t m = 0; m < members.size(); ++m) cell[m] = members[m][k].values()[c];
      std::sort(cell.begin(), cell.end());
      double sum = 0.0;
      for (double v : cell) sum += v;
      fv[c] = sum / n;
    }
    out.push_back(std::move(f));
  }
  return GridSeries(ref.start(), std::move(out));
}

}  // namespace seasonet::dataio
