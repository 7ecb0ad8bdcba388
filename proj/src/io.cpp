#include "toah/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace toah {

static_assert(std::endian::native == std::endian::little, "raw volumes assume a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return in;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32") return 4;
  if (dtype == "float64") return 8;
  if (dtype == "complex64") return 8;
  if (dtype == "complex128") return 16;
  if (dtype == "int16") return 2;
  throw std::runtime_error("unknown dtype '" + dtype + "'");
}

std::vector<char> read_raw(const fs::path& p, std::size_t expected) {
  auto in = open_in(p);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != expected)
    throw std::runtime_error(p.string() + ": expected " + std::to_string(expected) +
                             " bytes, found " + std::to_string(size));
  in.seekg(0);
  std::vector<char> buf(size);
  in.read(buf.data(), static_cast<std::streamsize>(size));
  return buf;
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

VolumeHeader header_for(const GridSpec& g, std::size_t nz, const std::string& kind,
                        const std::string& hash) {
  VolumeHeader h;
  h.nx = g.nx;
  h.ny = g.ny;
  h.nz = nz;
  h.dx = g.dx;
  h.dy = g.dy;
  h.dz = g.dz;
  h.frequency = g.frequency;
  h.kind = kind;
  h.config_hash = hash;
  return h;
}

}  // namespace

GridSpec VolumeHeader::grid() const {
  GridSpec g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.dx = dx;
  g.dy = dy;
  g.dz = dz;
  g.frequency = frequency;
  return g;
}

fs::path header_path(const fs::path& p) {
  fs::path h = p;
  return h.replace_extension(".json");
}

fs::path raw_path(const fs::path& p) {
  fs::path r = p;
  return r.replace_extension(".raw");
}

void write_header(const fs::path& raw, const VolumeHeader& h) {
  json j;
  j["dims"] = {h.nx, h.ny, h.nz};
  j["spacing_m"] = {h.dx, h.dy, h.dz};
  j["frequency_hz"] = h.frequency;
  j["fields"] = h.fields;
  j["dtype"] = h.dtype;
  j["kind"] = h.kind;
  j["config_hash"] = h.config_hash;
  j["schema_version"] = h.schema_version;
  j["data_file"] = raw_path(raw).filename().string();
  write_text(header_path(raw), j.dump(2) + "\n");
}

VolumeHeader read_header(const fs::path& p) {
  json j;
  try {
    j = json::parse(read_text(header_path(p)));
  } catch (const json::exception& e) {
    throw std::runtime_error(header_path(p).string() + ": malformed header (" + e.what() + ")");
  }
  VolumeHeader h;
  try {
    const auto dims = j.at("dims");
    const auto spacing = j.at("spacing_m");
    if (dims.size() != 3 || spacing.size() != 3) throw std::runtime_error("dims/spacing need 3 entries");
    h.nx = dims[0];
    h.ny = dims[1];
    h.nz = dims[2];
    h.dx = spacing[0];
    h.dy = spacing[1];
    h.dz = spacing[2];
    h.frequency = j.at("frequency_hz");
    h.fields = j.at("fields").get<std::vector<std::string>>();
    h.dtype = j.at("dtype");
    h.kind = j.value("kind", "");
    h.config_hash = j.value("config_hash", "");
    h.schema_version = j.at("schema_version");
  } catch (const std::exception& e) {
    throw std::runtime_error(header_path(p).string() + ": malformed header (" + e.what() + ")");
  }
  if (h.schema_version != kSchemaVersion)
    throw std::runtime_error(header_path(p).string() + ": unsupported schema_version " +
                             std::to_string(h.schema_version));
  dtype_size(h.dtype);
  return h;
}

void write_real_volume(const fs::path& raw, VolumeHeader h,
                       const std::vector<const Array3<double>*>& fields, Precision precision) {
  if (h.fields.size() != fields.size()) throw std::invalid_argument("write_real_volume: field names");
  h.dtype = precision == Precision::f32 ? "float32" : "float64";
  auto out = open_out(raw_path(raw));
  for (const auto* f : fields) {
    if (f->nx() != h.nx || f->ny() != h.ny || f->nz() != h.nz)
      throw std::invalid_argument("write_real_volume: shape does not match header");
    for (double v : f->flat()) {
      if (precision == Precision::f32)
        put(out, static_cast<float>(v));
      else
        put(out, v);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + raw.string());
  write_header(raw, h);
}

std::vector<Array3<double>> read_real_volume(const fs::path& p, VolumeHeader* out) {
  const auto h = read_header(p);
  if (h.dtype != "float32" && h.dtype != "float64")
    throw std::runtime_error(p.string() + ": expected a real volume, dtype is " + h.dtype);
  const std::size_t w = dtype_size(h.dtype);
  const auto buf = read_raw(raw_path(p), w * h.count() * h.fields.size());
  std::vector<Array3<double>> fields;
  const char* c = buf.data();
  for (std::size_t f = 0; f < h.fields.size(); ++f) {
    Array3<double> a(h.nx, h.ny, h.nz);
    for (auto& v : a.flat()) {
      v = w == 4 ? static_cast<double>(get<float>(c)) : get<double>(c);
      c += w;
    }
    fields.push_back(std::move(a));
  }
  if (out) *out = h;
  return fields;
}

void write_complex_volume(const fs::path& raw, VolumeHeader h, const Array3<Complex>& values,
                          Precision precision) {
  h.dtype = precision == Precision::f32 ? "complex64" : "complex128";
  if (h.fields.empty()) h.fields = {"pressure"};
  if (values.nx() != h.nx || values.ny() != h.ny || values.nz() != h.nz)
    throw std::invalid_argument("write_complex_volume: shape does not match header");
  auto out = open_out(raw_path(raw));
  for (const auto& v : values.flat()) {
    if (precision == Precision::f32) {
      put(out, static_cast<float>(v.real()));
      put(out, static_cast<float>(v.imag()));
    } else {
      put(out, v.real());
      put(out, v.imag());
    }
  }
  if (!out) throw std::runtime_error("write failed: " + raw.string());
  write_header(raw, h);
}

Array3<Complex> read_complex_volume(const fs::path& p, VolumeHeader* out) {
  const auto h = read_header(p);
  if (h.dtype != "complex64" && h.dtype != "complex128")
    throw std::runtime_error(p.string() + ": expected a complex volume, dtype is " + h.dtype);
  const std::size_t w = dtype_size(h.dtype);
  const auto buf = read_raw(raw_path(p), w * h.count());
  Array3<Complex> a(h.nx, h.ny, h.nz);
  const char* c = buf.data();
  for (auto& v : a.flat()) {
    if (w == 8)
      v = {get<float>(c), get<float>(c + 4)};
    else
      v = {get<double>(c), get<double>(c + 8)};
    c += w;
  }
  if (out) *out = h;
  return a;
}

void write_medium(const fs::path& raw, const AcousticMedium& m, const std::string& hash,
                  Precision precision) {
  auto h = header_for(m.grid, m.grid.nz, "medium", hash);
  h.fields = {"c", "rho", "att"};
  write_real_volume(raw, h, {&m.c, &m.rho, &m.att}, precision);
}

AcousticMedium read_medium(const fs::path& p) {
  VolumeHeader h;
  auto f = read_real_volume(p, &h);
  if (h.fields != std::vector<std::string>{"c", "rho", "att"})
    throw std::runtime_error(p.string() + ": medium files carry fields c, rho, att");
  AcousticMedium m{h.grid(), std::move(f[0]), std::move(f[1]), std::move(f[2])};
  m.validate();
  return m;
}

void write_field(const fs::path& raw, const ComplexField& f, const std::string& hash,
                 Precision precision) {
  auto h = header_for(f.grid, f.values.nz(), f.values.nz() == 1 ? "plane" : "field", hash);
  write_complex_volume(raw, h, f.values, precision);
}

ComplexField read_field(const fs::path& p) {
  VolumeHeader h;
  auto v = read_complex_volume(p, &h);
  return {h.grid(), std::move(v)};
}

Array3<std::int16_t> read_hu_volume(const fs::path& p, VolumeHeader* out) {
  const auto h = read_header(p);
  if (h.dtype != "int16") throw std::runtime_error(p.string() + ": HU volumes must be int16");
  const auto buf = read_raw(raw_path(p), 2 * h.count());
  Array3<std::int16_t> a(h.nx, h.ny, h.nz);
  for (std::size_t n = 0; n < a.size(); ++n) a[n] = get<std::int16_t>(buf.data() + 2 * n);
  if (out) *out = h;
  return a;
}

void write_hu_volume(const fs::path& raw, const GridSpec& grid, const Array3<std::int16_t>& hu,
                     const std::string& hash) {
  auto h = header_for(grid, grid.nz, "hu", hash);
  h.fields = {"hu"};
  h.dtype = "int16";
  auto out = open_out(raw_path(raw));
  for (auto v : hu.flat()) put(out, v);
  write_header(raw, h);
}

void write_map(const fs::path& raw, const Array2<double>& map, const GridSpec& grid,
               const std::string& kind, const std::string& hash, Precision precision) {
  auto h = header_for(grid, 1, kind, hash);
  h.fields = {kind};
  Array3<double> a(map.nx(), map.ny(), 1);
  std::copy(map.flat().begin(), map.flat().end(), a.flat().begin());
  write_real_volume(raw, h, {&a}, precision);
}

Array2<double> read_map(const fs::path& p, VolumeHeader* out) {
  VolumeHeader h;
  auto f = read_real_volume(p, &h);
  if (h.nz != 1 || f.size() != 1) throw std::runtime_error(p.string() + ": expected a 2D map");
  Array2<double> m(h.nx, h.ny);
  std::copy(f[0].flat().begin(), f[0].flat().end(), m.flat().begin());
  if (out) *out = h;
  return m;
}

void write_lens(const fs::path& raw, const LensVolume& lens, const GridSpec& grid,
                const std::string& hash, Precision precision) {
  auto h = header_for(grid, lens.depth(), "lens", hash);
  h.fields = {"occupancy"};
  write_real_volume(raw, h, {&lens.occupancy}, precision);
}

LensVolume read_lens(const fs::path& p) {
  VolumeHeader h;
  auto f = read_real_volume(p, &h);
  if (h.fields != std::vector<std::string>{"occupancy"})
    throw std::runtime_error(p.string() + ": lens files carry a single occupancy field");
  LensVolume lens{std::move(f[0]), Array2<double>(h.nx, h.ny)};
  // Thickness is recovered as the solid fraction of each column.
  for (std::size_t k = 0; k < h.nz; ++k)
    for (std::size_t j = 0; j < h.ny; ++j)
      for (std::size_t i = 0; i < h.nx; ++i) lens.thickness(i, j) += lens.occupancy(i, j, k);
  return lens;
}

void write_matrix_csv(const fs::path& p, const Array2<double>& m) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (std::size_t j = 0; j < m.ny(); ++j) {
    for (std::size_t i = 0; i < m.nx(); ++i) s << (i ? "," : "") << m(i, j);
    s << '\n';
  }
  write_text(p, s.str());
}

Array2<double> read_matrix_csv(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(p.string() + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(p.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(p.string() + ": empty matrix");
  Array2<double> m(rows.front().size(), rows.size());
  for (std::size_t j = 0; j < m.ny(); ++j)
    for (std::size_t i = 0; i < m.nx(); ++i) m(i, j) = rows[j][i];
  return m;
}

void write_pgm16(const fs::path& p, const Array2<double>& m, double lo, double hi) {
  auto out = open_out(p);
  out << "P5\n" << m.nx() << ' ' << m.ny() << "\n65535\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t j = 0; j < m.ny(); ++j)
    for (std::size_t i = 0; i < m.nx(); ++i) {
      const double u = std::clamp((m(i, j) - lo) / span, 0.0, 1.0);
      const auto v = static_cast<std::uint16_t>(std::lround(u * 65535.0));
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    }
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

namespace {

struct Vec3 {
  float x, y, z;
};

struct StlWriter {
  std::vector<char> body;
  std::size_t count = 0;

  void tri(Vec3 a, Vec3 b, Vec3 c) {
    const Vec3 u{b.x - a.x, b.y - a.y, b.z - a.z}, v{c.x - a.x, c.y - a.y, c.z - a.z};
    Vec3 nrm{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
    const float len = std::sqrt(nrm.x * nrm.x + nrm.y * nrm.y + nrm.z * nrm.z);
    if (len > 0) nrm = {nrm.x / len, nrm.y / len, nrm.z / len};
    for (const Vec3& w : {nrm, a, b, c}) append(w);
    body.push_back(0);
    body.push_back(0);
    ++count;
  }
  // Quad a-b-c-d, counter-clockwise seen from outside.
  void quad(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
    tri(a, b, c);
    tri(a, c, d);
  }
  void append(const Vec3& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    body.insert(body.end(), p, p + sizeof(Vec3));
  }
};

}  // namespace

std::size_t write_heightmap_stl(const fs::path& p, const Array2<double>& height, double dx,
                                double dy) {
  const std::size_t nx = height.nx(), ny = height.ny();
  const float sx = static_cast<float>(dx * 1e3), sy = static_cast<float>(dy * 1e3);
  auto h = [&](long i, long j) -> float {
    if (i < 0 || j < 0 || i >= static_cast<long>(nx) || j >= static_cast<long>(ny)) return 0.0f;
    return static_cast<float>(height(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) * 1e3);
  };
  StlWriter w;
  for (long j = 0; j < static_cast<long>(ny); ++j)
    for (long i = 0; i < static_cast<long>(nx); ++i) {
      const float z = h(i, j);
      if (z <= 0) continue;
      const float x0 = i * sx, x1 = (i + 1) * sx, y0 = j * sy, y1 = (j + 1) * sy;
      w.quad({x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z});
      w.quad({x0, y0, 0}, {x0, y1, 0}, {x1, y1, 0}, {x1, y0, 0});
      float n = h(i + 1, j);
      if (n < z) w.quad({x1, y0, n}, {x1, y1, n}, {x1, y1, z}, {x1, y0, z});
      n = h(i - 1, j);
      if (n < z) w.quad({x0, y0, n}, {x0, y0, z}, {x0, y1, z}, {x0, y1, n});
      n = h(i, j + 1);
      if (n < z) w.quad({x0, y1, n}, {x0, y1, z}, {x1, y1, z}, {x1, y1, n});
      n = h(i, j - 1);
      if (n < z) w.quad({x0, y0, n}, {x1, y0, n}, {x1, y0, z}, {x0, y0, z});
    }
  auto out = open_out(p);
  std::string header = "toah heightmap lens, mm";
  header.resize(80, ' ');
  out.write(header.data(), 80);
  put(out, static_cast<std::uint32_t>(w.count));
  out.write(w.body.data(), static_cast<std::streamsize>(w.body.size()));
  if (!out) throw std::runtime_error("write failed: " + p.string());
  return w.count;
}

void write_loss_csv(const fs::path& p, const LossReport& r) {
  std::ostringstream s;
  s << std::setprecision(17) << "iteration,total,acc,energy,balance\n";
  for (std::size_t n = 0; n < r.size(); ++n)
    s << n << ',' << r.total[n] << ',' << r.acc[n] << ',' << r.energy[n] << ',' << r.balance[n]
      << '\n';
  write_text(p, s.str());
}

void write_report_csv(const fs::path& p, const FocalReport& r) {
  std::ostringstream s;
  s << std::setprecision(10)
    << "focus,peak_i,peak_j,peak_k,peak_pressure,peak_amplitude,fwhm_x_m,fwhm_y_m,fwhm_z_m,"
       "volume_m3,leakage_ratio,uniformity,psnr_cross_domain_db,n_components\n";
  for (std::size_t f = 0; f < r.foci.size(); ++f) {
    const auto& m = r.foci[f];
    s << f << ',' << m.peak_voxel[0] << ',' << m.peak_voxel[1] << ',' << m.peak_voxel[2] << ','
      << m.peak_pressure << ',' << m.peak_amplitude << ',' << m.fwhm_x << ',' << m.fwhm_y << ','
      << m.fwhm_z << ',' << m.volume_m3 << ',' << r.leakage_ratio << ',' << r.uniformity << ','
      << r.psnr_cross_domain << ',' << r.n_components << '\n';
  }
  write_text(p, s.str());
}

std::string report_json(const FocalReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["leakage_ratio"] = r.leakage_ratio;
  j["uniformity"] = r.uniformity;
  j["n_components"] = r.n_components;
  j["psnr_cross_domain_db"] = r.psnr_cross_domain;
  j["foci"] = json::array();
  for (const auto& m : r.foci)
    j["foci"].push_back({{"peak_voxel", m.peak_voxel},
                         {"peak_pressure", m.peak_pressure},
                         {"peak_amplitude", m.peak_amplitude},
                         {"fwhm_x_m", m.fwhm_x},
                         {"fwhm_y_m", m.fwhm_y},
                         {"fwhm_z_m", m.fwhm_z},
                         {"volume_m3", m.volume_m3}});
  return j.dump(2) + "\n";
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  auto out = open_out(p);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  auto in = open_in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace toah
