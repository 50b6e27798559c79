#pragma once

// CGT binary grids, normalization statistics, the synthetic climate
// generator and the multi-member ensemble mean.
//
// CGT layout (all little-endian):
//   offset  0  magic "CGT1"
//   offset  4  n_time      u32
//   offset  8  n_lat       u32
//   offset 12  n_lon       u32
//   offset 16  start_year  i32
//   offset 20  start_month u8  (1..12)
//   offset 21  kind        u8  (0 temperature, 1 elevation, 2 mask)
//   offset 22  reserved    2 zero bytes
//   offset 24  payload     n_time*n_lat*n_lon float32, time-major, row-major

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "seasonet/grid.hpp"

namespace seasonet::dataio {

inline constexpr std::size_t kCgtHeaderSize = 24;

enum class CgtKind : std::uint8_t { kTemperature = 0, kElevation = 1, kMask = 2 };

struct ElevationField {
  GridField field;  // metres
};

using CgtObject = std::variant<GridSeries, ElevationField, RegionMask>;

struct ReadOptions {
  bool kelvin_input = false;  // temperature payload is in Kelvin; convert to Celsius
  std::string mask_name;      // defaults to the file stem
};

/// Serializes raw frames. Validates kind-specific invariants (InvariantError).
std::vector<std::uint8_t> encode_cgt(CgtKind kind, MonthStamp start, std::span<const GridField> frames);
CgtObject decode_cgt(std::span<const std::uint8_t> bytes, const ReadOptions& opts = {});

CgtObject read_cgt(const std::filesystem::path& path, const ReadOptions& opts = {});
GridSeries read_series(const std::filesystem::path& path, const ReadOptions& opts = {});
ElevationField read_elevation(const std::filesystem::path& path);
RegionMask read_mask(const std::filesystem::path& path, const std::string& name = {});

void write_cgt(const GridSeries& series, const std::filesystem::path& path);
void write_cgt(const ElevationField& elevation, const std::filesystem::path& path);
void write_cgt(const RegionMask& mask, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  std::string computed_over;
  double elevation_mean = 0.0;
  double elevation_std = 1.0;

  void validate() const;
  double normalize(double x) const { return (x - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
  double normalize_elevation(double e) const { return (e - elevation_mean) / elevation_std; }
};

/// Population mean/std over every training value. Elevation stats default to (0, 1)
/// when no elevation field is given.
NormStats compute_norm_stats(std::span<const GridSeries> train_series, const ElevationField* elevation = nullptr,
                             std::string computed_over = {});

GridField normalize(const GridField& field, const NormStats& stats);
GridField denormalize(const GridField& field, const NormStats& stats);

// ---------------------------------------------------------------------------

struct SyntheticConfig {
  std::size_t n_lat = 24;
  std::size_t n_lon = 48;
  std::size_t n_years = 80;
  MonthStamp start{1940, 1};
  double base_equator = 27.0;           // degC
  double pole_drop = 45.0;              // degC from equator to pole
  double seasonal_amplitude_pole = 15.0;  // degC
  int phase_month = 7;
  double trend = 0.2;           // degC per decade
  double noise_std = 0.5;       // degC
  double lapse_rate = 6.5;      // degC per km
  double elevation_scale = 3.0; // km, peak height of the bump field
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  GridSeries series;
  ElevationField elevation;  // metres
};

/// Deterministic climate-like series: latitudinal mean, |lat|-scaled annual cycle,
/// linear trend, lapse-rate cooling over a 3-bump elevation field, Gaussian noise.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

/// Elevation bump field (km) used by the generator.
GridField synthetic_elevation_km(const SyntheticConfig& cfg);

/// Noise-free generator value at row i for a given month (km elevation supplied).
double synthetic_mean_value(const SyntheticConfig& cfg, std::size_t row, std::size_t t, double elevation_km);

// ---------------------------------------------------------------------------

/// Per-cell mean across members sharing grid and calendar span.
GridSeries ensemble_mean(std::span<const GridSeries> members);

}  // namespace seasonet::dataio
