#pragma once

// Synthetic primitive shapes, dataset splits, registration pairs and the
// XYZ / ASCII PLY cloud formats.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dsample/geometry.hpp"
#include "dsample/rotation.hpp"

namespace dsample {

enum class Primitive { sphere, box, cylinder, cone, torus, plane_cross, helix, two_spheres };

inline constexpr std::size_t kPrimitiveCount = 8;

inline Primitive primitive_of_class(std::size_t class_id) {
  if (class_id >= kPrimitiveCount) throw Error("class id " + std::to_string(class_id) + " has no primitive");
  return static_cast<Primitive>(class_id);
}

inline std::string to_string(Primitive p) {
  static const char* names[] = {"sphere", "box", "cylinder", "cone", "torus", "plane-cross", "helix", "two-spheres"};
  return names[static_cast<int>(p)];
}

inline Primitive parse_primitive(const std::string& s) {
  for (std::size_t i = 0; i < kPrimitiveCount; ++i)
    if (to_string(static_cast<Primitive>(i)) == s) return static_cast<Primitive>(i);
  throw Error("unknown primitive '" + s + "'");
}

/// Box half extents before the random anisotropic scale.
inline constexpr Point3 kBoxHalfExtents{1.0, 0.7, 0.4};

struct ShapeSpec {
  std::size_t class_id = 0;
  Primitive kind = Primitive::sphere;
  double jitter = 0.0;      // Gaussian sigma, before normalization
  double scale_min = 1.0;   // per-axis scale drawn from [scale_min, scale_max]
  double scale_max = 1.0;
  std::uint64_t seed = 0;
};

/// Independent stream seed for item `index` of a run seeded with `seed`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline PointCloud normalize(const PointCloud& P) {
  require_nonempty(P, "normalize");
  Point3 c{0, 0, 0};
  for (const auto& p : P)
    for (int i = 0; i < 3; ++i) c[i] += p[i];
  for (auto& v : c) v /= static_cast<double>(P.size());
  double r2 = 0.0;
  for (const auto& p : P) r2 = std::max(r2, sq_dist(p, c));
  if (!(r2 > 0.0)) throw Error("normalize: all points are identical");
  const double r = std::sqrt(r2);
  std::vector<Point3> out;
  out.reserve(P.size());
  for (const auto& p : P) out.push_back({(p[0] - c[0]) / r, (p[1] - c[1]) / r, (p[2] - c[2]) / r});
  return PointCloud(std::move(out));
}

namespace detail {

inline Point3 unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  for (;;) {
    Point3 v{g(rng), g(rng), g(rng)};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

/// Picks an index with probability proportional to weights.
inline std::size_t pick(const std::vector<double>& w, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return d(rng);
}

inline Point3 box_point(std::mt19937_64& rng) {
  const auto [a, b, c] = kBoxHalfExtents;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // faces: +-x (area 4bc), +-y (4ac), +-z (4ab)
  const std::size_t f = pick({b * c, b * c, a * c, a * c, a * b, a * b}, rng);
  const double s = f % 2 == 0 ? 1.0 : -1.0;
  switch (f / 2) {
    case 0: return {s * a, u(rng) * b, u(rng) * c};
    case 1: return {u(rng) * a, s * b, u(rng) * c};
    default: return {u(rng) * a, u(rng) * b, s * c};
  }
}

inline Point3 cylinder_point(std::mt19937_64& rng) {
  constexpr double r = 0.5, h = 0.8;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tau = 2.0 * std::numbers::pi;
  const std::size_t f = pick({tau * r * 2 * h, std::numbers::pi * r * r, std::numbers::pi * r * r}, rng);
  const double th = tau * u(rng);
  if (f == 0) return {r * std::cos(th), r * std::sin(th), h * (2 * u(rng) - 1)};
  const double rr = r * std::sqrt(u(rng));
  return {rr * std::cos(th), rr * std::sin(th), f == 1 ? h : -h};
}

inline Point3 cone_point(std::mt19937_64& rng) {
  constexpr double r = 0.6, h = 1.2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double slant = std::sqrt(r * r + h * h);
  const double th = 2.0 * std::numbers::pi * u(rng);
  const std::size_t f = pick({std::numbers::pi * r * slant, std::numbers::pi * r * r}, rng);
  const double s = std::sqrt(u(rng));  // radial fraction, area grows linearly
  if (f == 0) return {s * r * std::cos(th), s * r * std::sin(th), h * (1.0 - s)};
  return {s * r * std::cos(th), s * r * std::sin(th), 0.0};
}

inline Point3 torus_point(std::mt19937_64& rng) {
  constexpr double R = 0.7, r = 0.25;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tau = 2.0 * std::numbers::pi;
  for (;;) {
    const double phi = tau * u(rng);
    if (u(rng) * (R + r) > R + r * std::cos(phi)) continue;
    const double th = tau * u(rng);
    const double rho = R + r * std::cos(phi);
    return {rho * std::cos(th), rho * std::sin(th), r * std::sin(phi)};
  }
}

inline Point3 plane_cross_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng), b = u(rng);
  if (std::uniform_int_distribution<int>(0, 1)(rng) == 0) return {a, 0.0, b};
  return {0.0, a, b};
}

inline Point3 helix_point(std::mt19937_64& rng) {
  constexpr double R = 0.6, tube = 0.08, turns = 3.0, height = 1.6;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tau = 2.0 * std::numbers::pi;
  const double s = u(rng);
  const double th = tau * turns * s;
  const Point3 c{R * std::cos(th), R * std::sin(th), height * (s - 0.5)};
  // Frame: tangent T, normal N (towards axis), binormal B = T x N.
  const double pitch = height / (tau * turns);
  const double len = std::sqrt(R * R + pitch * pitch);
  const Point3 T{-R * std::sin(th) / len, R * std::cos(th) / len, pitch / len};
  const Point3 N{-std::cos(th), -std::sin(th), 0.0};
  const Point3 B{T[1] * N[2] - T[2] * N[1], T[2] * N[0] - T[0] * N[2], T[0] * N[1] - T[1] * N[0]};
  const double a = tau * u(rng);
  const double ca = tube * std::cos(a), sa = tube * std::sin(a);
  return {c[0] + ca * N[0] + sa * B[0], c[1] + ca * N[1] + sa * B[1], c[2] + ca * N[2] + sa * B[2]};
}

inline Point3 two_spheres_point(std::mt19937_64& rng) {
  const auto d = unit_vector(rng);
  const double cx = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? -0.6 : 0.6;
  return {cx + 0.5 * d[0], 0.5 * d[1], 0.5 * d[2]};
}

}  // namespace detail

/// n points uniform over the primitive's surface, before jitter, scaling and
/// normalization.
inline std::vector<Point3> sample_surface(Primitive kind, std::size_t n, std::mt19937_64& rng) {
  std::vector<Point3> pts(n);
  for (auto& p : pts) {
    switch (kind) {
      case Primitive::sphere: p = detail::unit_vector(rng); break;
      case Primitive::box: p = detail::box_point(rng); break;
      case Primitive::cylinder: p = detail::cylinder_point(rng); break;
      case Primitive::cone: p = detail::cone_point(rng); break;
      case Primitive::torus: p = detail::torus_point(rng); break;
      case Primitive::plane_cross: p = detail::plane_cross_point(rng); break;
      case Primitive::helix: p = detail::helix_point(rng); break;
      case Primitive::two_spheres: p = detail::two_spheres_point(rng); break;
      default: throw Error("sample_surface: unknown primitive");
    }
  }
  return pts;
}

inline PointCloud generate_cloud(const ShapeSpec& spec, std::size_t n) {
  if (n < 8) throw Error("generate_cloud: need at least 8 points, got " + std::to_string(n));
  if (static_cast<std::size_t>(spec.kind) >= kPrimitiveCount) throw Error("generate_cloud: unknown primitive");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
  const Point3 s{scale(rng), scale(rng), scale(rng)};
  auto pts = sample_surface(spec.kind, n, rng);
  std::normal_distribution<double> noise(0.0, spec.jitter > 0.0 ? spec.jitter : 1.0);
  for (auto& p : pts)
    for (int i = 0; i < 3; ++i) {
      p[i] *= s[i];
      if (spec.jitter > 0.0) p[i] += noise(rng);
    }
  return normalize(PointCloud(std::move(pts)));
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

struct DatasetSplit {
  std::vector<std::size_t> train, validation, test;
};

/// Shuffles 0..count-1 and cuts it at the given fractions (the test part
/// takes the remainder).
inline DatasetSplit make_split(std::size_t count, double train_fraction, double validation_fraction,
                               std::uint64_t seed) {
  if (train_fraction < 0 || validation_fraction < 0 || train_fraction + validation_fraction > 1.0)
    throw Error("make_split: invalid fractions");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
  const auto n_val = std::min(count - n_train,
                              static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(count))));
  DatasetSplit s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.validation.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

inline DatasetSplit make_split(std::size_t count, std::uint64_t seed) { return make_split(count, 0.85, 0.05, seed); }

struct DatasetConfig {
  std::size_t classes = 8;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 40;
  std::size_t n = 256;
  double jitter = 0.01;
  double scale_min = 0.6;
  double scale_max = 1.4;
  std::uint64_t seed = 1;
};

struct Sample {
  PointCloud cloud;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

inline ShapeSpec shape_spec(const DatasetConfig& cfg, std::size_t class_id, std::uint64_t seed) {
  return {class_id, primitive_of_class(class_id), cfg.jitter, cfg.scale_min, cfg.scale_max, seed};
}

/// Class-balanced dataset. Cloud i of class c draws from its own stream, so
/// generation order does not matter and parallel generation gives the same
/// clouds. Training clouds are interleaved by class.
inline Dataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.classes < 1 || cfg.classes > kPrimitiveCount)
    throw Error("generate_dataset: classes must be in [1, " + std::to_string(kPrimitiveCount) + "]");
  const std::size_t per = cfg.train_per_class + cfg.test_per_class;
  Dataset ds;
  for (std::size_t i = 0; i < per; ++i)
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      const auto seed = stream_seed(cfg.seed, c * per + i);
      Sample s{generate_cloud(shape_spec(cfg, c, seed), cfg.n), c};
      (i < cfg.train_per_class ? ds.train : ds.test).push_back(std::move(s));
    }
  return ds;
}

/// Single-class cloud pool for registration or reconstruction, split 85/5/10.
struct CloudPool {
  std::vector<PointCloud> clouds;
  DatasetSplit split;
};

inline CloudPool generate_pool(const DatasetConfig& cfg, Primitive kind, std::size_t count) {
  CloudPool pool;
  for (std::size_t i = 0; i < count; ++i) {
    ShapeSpec spec{static_cast<std::size_t>(kind), kind, cfg.jitter, cfg.scale_min, cfg.scale_max,
                   stream_seed(cfg.seed ^ 0x5eedULL, i)};
    pool.clouds.push_back(generate_cloud(spec, cfg.n));
  }
  pool.split = make_split(count, stream_seed(cfg.seed, 0xa11ULL));
  return pool;
}

// ---------------------------------------------------------------------------
// Registration pairs

struct RegistrationPair {
  PointCloud source;  // rotation applied to the template
  PointCloud templ;
  Rotation rotation;
};

/// Source = R_gt T with intrinsic Z-Y-X Euler angles uniform in
/// [-angle_range, angle_range] degrees.
inline RegistrationPair make_registration_pair(const PointCloud& T, double angle_range, std::uint64_t seed) {
  if (angle_range < 0.0 || angle_range > 180.0) throw Error("make_registration_pair: angle range must be in [0, 180]");
  std::mt19937_64 rng(seed);
  const double a = angle_range * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> u(-a, a);
  const double yaw = u(rng), pitch = u(rng), roll = u(rng);
  const auto R = angle_range == 0.0 ? Rotation::identity() : Rotation::from_euler_zyx(yaw, pitch, roll);
  return {R.apply(T), T, R};
}

// ---------------------------------------------------------------------------
// File formats

namespace detail {

[[noreturn]] inline void io_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

inline double parse_double(const std::string& tok, const std::string& path, std::size_t line) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (!tok.empty() && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) io_fail(path, line, "not a number: '" + tok + "'");
  if (!std::isfinite(v)) io_fail(path, line, "non-finite coordinate '" + tok + "'");
  return v;
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

inline std::string lower_extension(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline PointCloud read_xyz(std::istream& is, const std::string& path) {
  std::vector<Point3> pts;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    const auto t = tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 3) io_fail(path, no, "expected 3 values, got " + std::to_string(t.size()));
    pts.push_back({parse_double(t[0], path, no), parse_double(t[1], path, no), parse_double(t[2], path, no)});
  }
  return PointCloud(std::move(pts));
}

inline PointCloud read_ply(std::istream& is, const std::string& path) {
  std::string line;
  std::size_t no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") io_fail(path, 1, "missing 'ply' magic");
  std::size_t vertices = 0;
  bool have_vertex = false, in_vertex = false, have_format = false;
  std::vector<std::string> props;
  for (;;) {
    if (!next()) io_fail(path, no, "header ends without end_header");
    const auto t = tokens(line);
    if (t.empty() || t[0] == "comment" || t[0] == "obj_info") continue;
    if (t[0] == "end_header") break;
    if (t[0] == "format") {
      if (t.size() != 3 || t[1] != "ascii") io_fail(path, no, "only 'format ascii 1.0' is supported");
      have_format = true;
    } else if (t[0] == "element") {
      if (t.size() != 3) io_fail(path, no, "malformed element line");
      in_vertex = t[1] == "vertex";
      if (in_vertex) {
        if (have_vertex) io_fail(path, no, "duplicate vertex element");
        have_vertex = true;
        try {
          std::size_t used = 0;
          vertices = std::stoul(t[2], &used);
          if (used != t[2].size()) throw std::invalid_argument("count");
        } catch (const std::exception&) {
          io_fail(path, no, "bad vertex count '" + t[2] + "'");
        }
      } else if (!have_vertex) {
        io_fail(path, no, "elements before vertex are not supported");
      }
    } else if (t[0] == "property") {
      if (t.size() != 3) io_fail(path, no, "malformed or list property");
      if (in_vertex) props.push_back(t[2]);
    } else {
      io_fail(path, no, "unexpected header line '" + t[0] + "'");
    }
  }
  if (!have_format) io_fail(path, no, "missing format line");
  if (!have_vertex) io_fail(path, no, "missing vertex element");
  std::size_t ix = props.size(), iy = props.size(), iz = props.size();
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i] == "x") ix = i;
    if (props[i] == "y") iy = i;
    if (props[i] == "z") iz = i;
  }
  if (ix == props.size() || iy == props.size() || iz == props.size()) io_fail(path, no, "vertex lacks x, y, z");
  std::vector<Point3> pts;
  pts.reserve(vertices);
  while (pts.size() < vertices) {
    if (!next()) io_fail(path, no, "expected " + std::to_string(vertices) + " vertices, found " + std::to_string(pts.size()));
    const auto t = tokens(line);
    if (t.empty()) continue;
    if (t.size() != props.size())
      io_fail(path, no, "expected " + std::to_string(props.size()) + " values, got " + std::to_string(t.size()));
    pts.push_back({parse_double(t[ix], path, no), parse_double(t[iy], path, no), parse_double(t[iz], path, no)});
  }
  // Only vertices declared and trailing data present: the count is wrong.
  while (next()) {
    if (!tokens(line).empty()) io_fail(path, no, "more vertex lines than the declared " + std::to_string(vertices));
  }
  return PointCloud(std::move(pts));
}

}  // namespace detail

/// Reads an ASCII XYZ (.xyz) or ASCII PLY (.ply) file.
inline PointCloud read_cloud(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  const auto ext = detail::lower_extension(path);
  if (ext == ".xyz") return detail::read_xyz(is, path);
  if (ext == ".ply") return detail::read_ply(is, path);
  throw IoError("unsupported cloud format '" + ext + "' for '" + path + "'");
}

inline void write_cloud(const std::string& path, const PointCloud& P) {
  const auto ext = detail::lower_extension(path);
  if (ext != ".xyz" && ext != ".ply") throw IoError("unsupported cloud format '" + ext + "' for '" + path + "'");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  if (ext == ".ply")
    os << "ply\nformat ascii 1.0\nelement vertex " << P.size()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : P) os << detail::fmt17(p[0]) << ' ' << detail::fmt17(p[1]) << ' ' << detail::fmt17(p[2]) << '\n';
  if (!os) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string path;
  std::size_t class_id = 0;
  std::string split;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << "path,class_id,split\n";
  for (const auto& e : entries) os << e.path << ',' << e.class_id << ',' << e.split << '\n';
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (no == 1) {
      if (line != "path,class_id,split") detail::io_fail(path, no, "bad manifest header");
      continue;
    }
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) detail::io_fail(path, no, "expected 3 fields");
    ManifestEntry e;
    e.path = line.substr(0, a);
    try {
      e.class_id = std::stoul(line.substr(a + 1, b - a - 1));
    } catch (const std::exception&) {
      detail::io_fail(path, no, "bad class id");
    }
    e.split = line.substr(b + 1);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dsample
