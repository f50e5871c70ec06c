#include "rpg/dataio.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

namespace rpg {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  return f;
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

PointCloud parse_cloud_binary(const std::string& bytes) {
  if (bytes.size() < 16) throw FormatError("binary cloud: header truncated");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kPointFileVersion)
    throw FormatError("binary cloud: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(bytes.data() + 8);
  const std::size_t expected = 16 + 12ull * count;
  if (bytes.size() != expected) {
    throw FormatError("binary cloud: header declares " + std::to_string(count) + " points (" +
                      std::to_string(expected) + " bytes) but file has " +
                      std::to_string(bytes.size()) + " bytes");
  }
  PointCloud cloud;
  cloud.points.resize(3, count);
  for (std::uint32_t i = 0; i < 3 * count; ++i)
    cloud.points.data()[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
  return cloud;
}

}  // namespace

PointCloud parse_cloud_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> coords;
  std::vector<int> labels;
  int line_no = 0;
  int with_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tokens{std::istream_iterator<std::string>(ls), std::istream_iterator<std::string>()};
    const std::string where = "text cloud: line " + std::to_string(line_no) + ": ";
    if (tokens.size() < 3) throw FormatError(where + "expected 'x y z'");
    if (tokens.size() > 4) throw FormatError(where + "too many columns");
    double xyz[3];
    for (int c = 0; c < 3; ++c) {
      const std::string& t = tokens[static_cast<std::size_t>(c)];
      const char* begin = t.data() + (t.size() > 1 && t[0] == '+');
      const auto [end, ec] = std::from_chars(begin, t.data() + t.size(), xyz[c]);
      if (ec != std::errc() || end != t.data() + t.size()) throw FormatError(where + "expected 'x y z'");
      if (!std::isfinite(xyz[c])) throw FormatError(where + "non-finite coordinate");
    }
    const double x = xyz[0], y = xyz[1], z = xyz[2];
    const bool has_label = tokens.size() == 4;
    int label = 0;
    if (has_label) {
      const std::string& t = tokens[3];
      const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), label);
      if (ec != std::errc() || end != t.data() + t.size()) throw FormatError(where + "label must be an integer");
    }
    if (with_label < 0) with_label = has_label ? 1 : 0;
    if ((with_label == 1) != has_label) {
      throw FormatError(where + "label column present on some lines only");
    }
    coords.insert(coords.end(), {x, y, z});
    if (has_label) labels.push_back(label);
  }
  PointCloud cloud;
  cloud.points = Eigen::Map<const Eigen::Matrix3Xd>(coords.data(), 3,
                                                    static_cast<Eigen::Index>(coords.size() / 3));
  cloud.labels = std::move(labels);
  return cloud;
}

PointCloud load_cloud(const fs::path& path) {
  const std::string bytes = read_file(path);
  PointCloud cloud;
  try {
    cloud = (bytes.size() >= 4 && bytes.compare(0, 4, "RPGP") == 0) ? parse_cloud_binary(bytes)
                                                                     : parse_cloud_text(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (cloud.size() == 0) throw FormatError(path.string() + ": no points");
  return cloud;
}

void save_cloud_text(const PointCloud& cloud, const fs::path& path) {
  auto f = open_out(path);
  f << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    f << cloud.points(0, i) << ' ' << cloud.points(1, i) << ' ' << cloud.points(2, i);
    if (cloud.has_labels()) f << ' ' << cloud.labels[static_cast<std::size_t>(i)];
    f << '\n';
  }
}

void save_cloud_binary(const PointCloud& cloud, const fs::path& path) {
  std::string out = "RPGP";
  put_u32(out, kPointFileVersion);
  put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  put_u32(out, 0);
  for (Eigen::Index i = 0; i < cloud.points.size(); ++i)
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(cloud.points.data()[i])));
  auto f = open_out(path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Dataset load_dataset(const fs::path& path) {
  Dataset ds;
  ds.name = path.filename().string();
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto ext = entry.path().extension().string();
      if (entry.is_regular_file() && (ext == ".xyz" || ext == ".txt" || ext == ".pts" || ext == ".rpgp"))
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fs::path p(line);
      files.push_back(p.is_absolute() ? p : path.parent_path() / p);
    }
  }
  if (files.empty()) throw FormatError("dataset " + path.string() + ": no point files");
  for (const auto& f : files) {
    ds.clouds.push_back(normalize_cloud(load_cloud(f)));
    ds.names.push_back(f.filename().string());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Meshes

TriangleMesh parse_off(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  in >> header;
  if (header != "OFF") throw FormatError("OFF: missing 'OFF' header");
  long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv < 0 || nf < 0) throw FormatError("OFF: bad counts line");
  TriangleMesh mesh;
  mesh.vertices.resize(3, nv);
  for (long i = 0; i < nv; ++i) {
    if (!(in >> mesh.vertices(0, i) >> mesh.vertices(1, i) >> mesh.vertices(2, i)))
      throw FormatError("OFF: vertex " + std::to_string(i) + " malformed");
  }
  mesh.triangles.resize(3, nf);
  for (long f = 0; f < nf; ++f) {
    int arity = 0;
    if (!(in >> arity)) throw FormatError("OFF: face " + std::to_string(f) + " malformed");
    if (arity != 3)
      throw FormatError("OFF: face " + std::to_string(f) + " has " + std::to_string(arity) +
                        " vertices; only triangles are supported");
    for (int c = 0; c < 3; ++c) {
      int idx = -1;
      if (!(in >> idx)) throw FormatError("OFF: face " + std::to_string(f) + " malformed");
      if (idx < 0 || idx >= nv)
        throw FormatError("OFF: face " + std::to_string(f) + " index " + std::to_string(idx) + " out of range");
      mesh.triangles(c, f) = idx;
    }
  }
  return mesh;
}

TriangleMesh load_off(const fs::path& path) {
  try {
    return parse_off(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

MeshSample sample_mesh_with_faces(const TriangleMesh& mesh, int n_points, std::uint64_t seed) {
  if (n_points < 1) throw std::invalid_argument("sample_mesh: n_points must be >= 1");
  const Eigen::Index nt = mesh.triangles.cols();
  std::vector<double> cumulative(static_cast<std::size_t>(nt));
  double total = 0;
  for (Eigen::Index t = 0; t < nt; ++t) {
    const Eigen::Vector3d a = mesh.vertices.col(mesh.triangles(0, t));
    const Eigen::Vector3d b = mesh.vertices.col(mesh.triangles(1, t));
    const Eigen::Vector3d c = mesh.vertices.col(mesh.triangles(2, t));
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[static_cast<std::size_t>(t)] = total;
  }
  if (!(total > 0)) throw std::invalid_argument("sample_mesh: every triangle is degenerate");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MeshSample out;
  out.cloud.points.resize(3, n_points);
  out.triangle.resize(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    // upper_bound never lands on a zero-area triangle: its cumulative value
    // equals its predecessor's.
    const auto t = static_cast<Eigen::Index>(it - cumulative.begin());
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Eigen::Vector3d a = mesh.vertices.col(mesh.triangles(0, t));
    const Eigen::Vector3d b = mesh.vertices.col(mesh.triangles(1, t));
    const Eigen::Vector3d c = mesh.vertices.col(mesh.triangles(2, t));
    out.cloud.points.col(i) = (1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c;
    out.triangle[static_cast<std::size_t>(i)] = static_cast<int>(t);
  }
  return out;
}

PointCloud sample_mesh(const TriangleMesh& mesh, int n_points, std::uint64_t seed) {
  return sample_mesh_with_faces(mesh, n_points, seed).cloud;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

namespace {

TriangleMesh box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  TriangleMesh m;
  m.vertices.resize(3, 8);
  for (int i = 0; i < 8; ++i) {
    m.vertices.col(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()),
        ((i & 4) ? hi.z() : lo.z());
  }
  m.triangles.resize(3, 12);
  m.triangles << 0, 0, 4, 4, 0, 0, 2, 2, 0, 0, 1, 1,  //
      2, 3, 5, 7, 1, 5, 3, 7, 4, 6, 5, 7,             //
      3, 1, 7, 6, 5, 4, 7, 6, 6, 2, 7, 3;
  return m;
}

TriangleMesh cylinder_mesh(double radius, double half_height, int segments) {
  TriangleMesh m;
  m.vertices.resize(3, 2 * segments + 2);
  for (int s = 0; s < segments; ++s) {
    const double a = 2.0 * M_PI * s / segments;
    m.vertices.col(s) << radius * std::cos(a), radius * std::sin(a), -half_height;
    m.vertices.col(segments + s) << radius * std::cos(a), radius * std::sin(a), half_height;
  }
  m.vertices.col(2 * segments) << 0, 0, -half_height;
  m.vertices.col(2 * segments + 1) << 0, 0, half_height;
  m.triangles.resize(3, 4 * segments);
  for (int s = 0; s < segments; ++s) {
    const int n = (s + 1) % segments;
    m.triangles.col(4 * s) << s, n, segments + s;
    m.triangles.col(4 * s + 1) << n, segments + n, segments + s;
    m.triangles.col(4 * s + 2) << 2 * segments, n, s;
    m.triangles.col(4 * s + 3) << 2 * segments + 1, segments + s, segments + n;
  }
  return m;
}

// Seeded proportion factor in [1 - spread, 1 + spread].
struct Proportions {
  explicit Proportions(std::uint64_t seed) : rng(seed ^ 0x9e3779b97f4a7c15ULL) {}
  double operator()(double spread) {
    return 1.0 + spread * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  }
  std::mt19937_64 rng;
};

}  // namespace

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "box") return ShapeKind::Box;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "table") return ShapeKind::Table;
  if (name == "tee") return ShapeKind::Tee;
  throw std::invalid_argument("unknown shape kind '" + name + "'");
}

std::string shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Table: return "table";
    case ShapeKind::Tee: return "tee";
  }
  throw std::invalid_argument("unknown shape kind");
}

int shape_part_count(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Table: return 5;
    case ShapeKind::Tee: return 2;
    default: return 1;
  }
}

std::vector<TriangleMesh> shape_parts(ShapeKind kind, std::uint64_t seed) {
  Proportions jitter(seed);
  switch (kind) {
    case ShapeKind::Sphere:
      throw std::invalid_argument("shape_parts: the sphere is sampled analytically");
    case ShapeKind::Box: {
      const Eigen::Vector3d half(0.5 * jitter(0.2), 0.3 * jitter(0.2), 0.2 * jitter(0.2));
      return {box_mesh(-half, half)};
    }
    case ShapeKind::Cylinder:
      return {cylinder_mesh(0.5 * jitter(0.2), 0.6 * jitter(0.2), 32)};
    case ShapeKind::Table: {
      const double hx = 1.0 * jitter(0.15);
      const double hy = 0.6 * jitter(0.15);
      const double top = 0.5;
      const double thick = 0.1 * jitter(0.2);
      const double leg = 0.06 * jitter(0.2);
      const double floor = -0.5 * jitter(0.15);
      const double inset = 0.1;
      std::vector<TriangleMesh> parts{box_mesh({-hx, -hy, top - thick}, {hx, hy, top})};
      for (int c = 0; c < 4; ++c) {
        const double cx = (c & 1) ? hx - inset : -hx + inset;
        const double cy = (c & 2) ? hy - inset : -hy + inset;
        parts.push_back(box_mesh({cx - leg, cy - leg, floor}, {cx + leg, cy + leg, top - thick}));
      }
      return parts;
    }
    case ShapeKind::Tee: {
      const double w = 1.0 * jitter(0.15);
      const double t = 0.15 * jitter(0.2);
      const double h = 0.65 * jitter(0.15);
      return {box_mesh({-w, -t, 0.35}, {w, t, 0.35 + 2 * t}),
              box_mesh({-t, -t, -h}, {t, t, 0.35})};
    }
  }
  throw std::invalid_argument("unknown shape kind");
}

namespace {

// Antipodal pairs plus, for odd counts, three unit vectors at 120 degrees in a
// random plane: every point is on the unit sphere and the centroid is zero.
Eigen::Matrix3Xd sphere_points(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    Eigen::Vector3d v;
    do {
      v << normal(rng), normal(rng), normal(rng);
    } while (v.norm() < 1e-9);
    return Eigen::Vector3d(v.normalized());
  };
  Eigen::Matrix3Xd pts(3, n);
  int i = 0;
  if (n % 2 == 1) {
    const Eigen::Vector3d a = random_unit();
    Eigen::Vector3d b = random_unit();
    b = (b - b.dot(a) * a).normalized();
    for (int j = 0; j < 3; ++j) {
      const double ang = 2.0 * M_PI * j / 3.0;
      pts.col(i++) = std::cos(ang) * a + std::sin(ang) * b;
    }
  }
  while (i < n) {
    const Eigen::Vector3d v = random_unit();
    pts.col(i++) = v;
    pts.col(i++) = -v;
  }
  return pts;
}

}  // namespace

PointCloud synth_shape(ShapeKind kind, int n_points, std::uint64_t seed, double jitter) {
  if (n_points < 8) throw std::invalid_argument("synth_shape: n_points must be >= 8");
  if (!(jitter >= 0)) throw std::invalid_argument("synth_shape: jitter must be >= 0");
  std::mt19937_64 rng(seed);
  PointCloud raw;
  if (kind == ShapeKind::Sphere) {
    raw.points = sphere_points(n_points, rng);
    raw.labels.assign(static_cast<std::size_t>(n_points), 0);
  } else {
    const auto parts = shape_parts(kind, seed);
    TriangleMesh all;
    std::vector<int> face_label;
    Eigen::Index nv = 0, nt = 0;
    for (const auto& p : parts) {
      nv += p.vertices.cols();
      nt += p.triangles.cols();
    }
    all.vertices.resize(3, nv);
    all.triangles.resize(3, nt);
    nv = nt = 0;
    for (std::size_t label = 0; label < parts.size(); ++label) {
      const auto& p = parts[label];
      all.vertices.middleCols(nv, p.vertices.cols()) = p.vertices;
      all.triangles.middleCols(nt, p.triangles.cols()) = p.triangles.array() + static_cast<int>(nv);
      face_label.insert(face_label.end(), static_cast<std::size_t>(p.triangles.cols()),
                        static_cast<int>(label));
      nv += p.vertices.cols();
      nt += p.triangles.cols();
    }
    const MeshSample s = sample_mesh_with_faces(all, n_points, rng());
    raw.points = s.cloud.points;
    for (int t : s.triangle) raw.labels.push_back(face_label[static_cast<std::size_t>(t)]);
  }
  if (jitter > 0) {
    std::normal_distribution<double> noise(0.0, jitter);
    for (Eigen::Index i = 0; i < raw.points.size(); ++i) raw.points.data()[i] += noise(rng);
  }
  return normalize_cloud(raw);
}

PointCloud synth_shape(const std::string& kind, int n_points, std::uint64_t seed, double jitter) {
  return synth_shape(parse_shape_kind(kind), n_points, seed, jitter);
}

// ---------------------------------------------------------------------------
// PLY

void write_ply(const Points3<double>& points, const std::vector<Rgb>& colors, const fs::path& path) {
  if (!colors.empty() && colors.size() != static_cast<std::size_t>(points.cols()))
    throw std::invalid_argument("write_ply: one color per point required");
  auto f = open_out(path);
  f << "ply\nformat ascii 1.0\ncomment written by rpg\nelement vertex " << points.cols()
    << "\nproperty float x\nproperty float y\nproperty float z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  f << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Rgb c = colors.empty() ? kUncolored : colors[static_cast<std::size_t>(i)];
    f << static_cast<float>(points(0, i)) << ' ' << static_cast<float>(points(1, i)) << ' '
      << static_cast<float>(points(2, i)) << ' ' << int(c[0]) << ' ' << int(c[1]) << ' '
      << int(c[2]) << '\n';
  }
  if (!f) throw FormatError("write failed for " + path.string());
}

void export_ply(const Points3<double>& points, const std::vector<int>& labels, const fs::path& path) {
  std::vector<Rgb> colors;
  for (int l : labels) colors.push_back(kPalette[static_cast<std::size_t>(l) % kPalette.size()]);
  write_ply(points, colors, path);
}

fs::path stage_path(const fs::path& path, int stage) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + "_d" + std::to_string(stage) + path.extension().string());
  return out;
}

template <typename Scalar>
std::vector<fs::path> export_ply(const GenerationTrace<Scalar>& trace, ColorMode mode, const fs::path& path) {
  const int last = static_cast<int>(trace.stages.size()) - 1;
  switch (mode.kind) {
    case ColorMode::Kind::None:
      write_ply(trace.output().template cast<double>(), {}, path);
      return {path};
    case ColorMode::Kind::ByAncestor:
      export_ply(trace.output().template cast<double>(), segment(trace, last, mode.level), path);
      return {path};
    case ColorMode::Kind::ByStage: {
      std::vector<fs::path> written;
      for (int d = 0; d <= last; ++d) {
        const auto& st = trace.stages[static_cast<std::size_t>(d)];
        std::vector<int> labels(static_cast<std::size_t>(st.size()), 0);
        if (d == 1) {
          for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i);
        } else if (d > 1) {
          labels = segment(trace, d, 1);
        }
        written.push_back(stage_path(path, d));
        export_ply(st.points.template cast<double>(), labels, written.back());
      }
      return written;
    }
  }
  throw std::invalid_argument("export_ply: unknown color mode");
}

template std::vector<fs::path> export_ply<float>(const GenerationTrace<float>&, ColorMode, const fs::path&);
template std::vector<fs::path> export_ply<double>(const GenerationTrace<double>&, ColorMode, const fs::path&);

PlyData read_ply(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw FormatError("PLY: missing magic");
  long count = -1;
  std::vector<std::string> props;
  bool in_vertex = false;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw FormatError("PLY: only ASCII files are supported");
  if (count < 0) throw FormatError("PLY: no vertex element");
  auto find = [&](const std::string& n) {
    const auto it = std::find(props.begin(), props.end(), n);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int ir = find("red"), ig = find("green"), ib = find("blue");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("PLY: vertex lacks x/y/z");
  PlyData out;
  out.points.resize(3, count);
  std::vector<double> row(props.size());
  for (long i = 0; i < count; ++i) {
    for (auto& v : row)
      if (!(in >> v)) throw FormatError("PLY: vertex " + std::to_string(i) + " truncated");
    out.points.col(i) << static_cast<float>(row[ix]), static_cast<float>(row[iy]),
        static_cast<float>(row[iz]);
    if (ir >= 0 && ig >= 0 && ib >= 0) {
      out.colors.push_back({static_cast<std::uint8_t>(row[ir]), static_cast<std::uint8_t>(row[ig]),
                            static_cast<std::uint8_t>(row[ib])});
    }
  }
  return out;
}

}  // namespace rpg
