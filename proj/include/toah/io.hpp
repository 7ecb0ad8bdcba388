#pragma once

// On-disk formats. Volumes are little-endian raw arrays (x fastest) next to a
// JSON sidecar carrying dims, spacing, frequency, field names, dtype, schema
// version and the hash of the config that produced them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "toah/analysis.hpp"
#include "toah/array.hpp"
#include "toah/baselines.hpp"
#include "toah/medium.hpp"
#include "toah/optim.hpp"
#include "toah/solver.hpp"

namespace toah {

constexpr int kSchemaVersion = 1;

enum class Precision { f32, f64 };

struct VolumeHeader {
  std::size_t nx = 0, ny = 0, nz = 0;
  double dx = 0, dy = 0, dz = 0;
  double frequency = 0;
  std::vector<std::string> fields;  // one raw block per field, in order
  std::string dtype;                // float32, float64, complex64, complex128, int16
  std::string kind;                 // medium, field, lens, theta, thermal, hu, plane
  std::string config_hash;
  int schema_version = kSchemaVersion;

  std::size_t count() const { return nx * ny * nz; }
  GridSpec grid() const;
};

/// Sidecar path for a raw file: "x.raw" -> "x.json". Accepts either name.
std::filesystem::path header_path(const std::filesystem::path& p);
std::filesystem::path raw_path(const std::filesystem::path& p);

void write_header(const std::filesystem::path& raw, const VolumeHeader& h);
VolumeHeader read_header(const std::filesystem::path& p);

void write_real_volume(const std::filesystem::path& raw, VolumeHeader h,
                       const std::vector<const Array3<double>*>& fields, Precision precision);
std::vector<Array3<double>> read_real_volume(const std::filesystem::path& p, VolumeHeader* out = nullptr);

void write_complex_volume(const std::filesystem::path& raw, VolumeHeader h,
                          const Array3<Complex>& values, Precision precision);
Array3<Complex> read_complex_volume(const std::filesystem::path& p, VolumeHeader* out = nullptr);

void write_medium(const std::filesystem::path& raw, const AcousticMedium& m,
                  const std::string& config_hash, Precision precision);
AcousticMedium read_medium(const std::filesystem::path& p);

void write_field(const std::filesystem::path& raw, const ComplexField& f,
                 const std::string& config_hash, Precision precision);
ComplexField read_field(const std::filesystem::path& p);

/// Raw int16 CT volume described by a header with dtype int16.
Array3<std::int16_t> read_hu_volume(const std::filesystem::path& p, VolumeHeader* out = nullptr);
void write_hu_volume(const std::filesystem::path& raw, const GridSpec& grid,
                     const Array3<std::int16_t>& hu, const std::string& config_hash);

/// 2D real map (theta checkpoints, phase maps) stored as a one-slice volume.
void write_map(const std::filesystem::path& raw, const Array2<double>& map, const GridSpec& grid,
               const std::string& kind, const std::string& config_hash, Precision precision);
Array2<double> read_map(const std::filesystem::path& p, VolumeHeader* out = nullptr);

/// Lens occupancy volume. On read the thickness map is the column sum.
void write_lens(const std::filesystem::path& raw, const LensVolume& lens, const GridSpec& grid,
                const std::string& config_hash, Precision precision);
LensVolume read_lens(const std::filesystem::path& p);

/// Rows are y, columns are x.
void write_matrix_csv(const std::filesystem::path& p, const Array2<double>& m);
Array2<double> read_matrix_csv(const std::filesystem::path& p);

/// Binary 16-bit PGM (P5, big-endian samples) scaled linearly from [lo, hi].
void write_pgm16(const std::filesystem::path& p, const Array2<double>& m, double lo, double hi);

/// Binary STL of a heightmap (metres in, millimetres out): top and bottom
/// faces per column plus side walls wherever a neighbour is lower.
/// Returns the triangle count.
std::size_t write_heightmap_stl(const std::filesystem::path& p, const Array2<double>& height,
                                double dx, double dy);

void write_loss_csv(const std::filesystem::path& p, const LossReport& r);

void write_report_csv(const std::filesystem::path& p, const FocalReport& r);
std::string report_json(const FocalReport& r);

/// Stable FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& text);

/// Whole-file write; parent directories are created.
void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

}  // namespace toah
