#pragma once

#include "rpg/geometry.hpp"
#include "rpg/model.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpg {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Point files.
//
// Text: one "x y z" line per point, optionally followed by an integer part
// label (all lines or none). Blank lines and lines starting with '#' are
// skipped.
//
// Binary: 16-byte header ("RPGP", u32 version = 1, u32 point count,
// u32 reserved = 0) followed by count little-endian float32 triples.

inline constexpr std::uint32_t kPointFileVersion = 1;

/// Reads either format (detected by the magic). The result is flagged raw.
PointCloud load_cloud(const std::filesystem::path& path);
PointCloud parse_cloud_text(const std::string& text);
void save_cloud_text(const PointCloud& cloud, const std::filesystem::path& path);
void save_cloud_binary(const PointCloud& cloud, const std::filesystem::path& path);

struct Dataset {
  std::string name;
  enum class Split { Train, Test } split = Split::Train;
  std::vector<PointCloud> clouds;
  std::vector<std::string> names;
};

/// A directory (every .xyz/.txt/.pts/.rpgp file, sorted by name) or a list
/// file with one path per line, relative to the list's directory. Every cloud
/// is normalized on load.
Dataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Meshes.

struct TriangleMesh {
  Eigen::Matrix3Xd vertices;
  Eigen::Matrix3Xi triangles;
};

/// OFF subset: "OFF" header, "V F E" counts, vertex lines, triangle faces
/// ("3 a b c") only.
TriangleMesh load_off(const std::filesystem::path& path);
TriangleMesh parse_off(const std::string& text);

struct MeshSample {
  PointCloud cloud;
  /// Source triangle of every sample.
  std::vector<int> triangle;
};

/// Area-weighted triangle choice, uniform barycentric position. Zero-area
/// triangles are never chosen. The output is flagged raw.
MeshSample sample_mesh_with_faces(const TriangleMesh& mesh, int n_points, std::uint64_t seed);
PointCloud sample_mesh(const TriangleMesh& mesh, int n_points, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic shapes.

enum class ShapeKind { Sphere, Box, Cylinder, Table, Tee };

ShapeKind parse_shape_kind(const std::string& name);
std::string shape_kind_name(ShapeKind kind);
/// Number of ground-truth parts of a kind (table: top + 4 legs, tee: 2).
int shape_part_count(ShapeKind kind);

/// Deterministic surface sample of a primitive or composite shape, with
/// per-point part labels, normalized. The seed also perturbs proportions of
/// all kinds except the sphere. `jitter` adds Gaussian noise of that standard
/// deviation before normalization.
PointCloud synth_shape(ShapeKind kind, int n_points, std::uint64_t seed, double jitter = 0.0);
PointCloud synth_shape(const std::string& kind, int n_points, std::uint64_t seed, double jitter = 0.0);

/// Part meshes of a composite shape before sampling, one per label.
std::vector<TriangleMesh> shape_parts(ShapeKind kind, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Latent interpolation.

/// `steps` evenly spaced codes from a to b, both endpoints included exactly.
template <typename Scalar>
std::vector<VectorX<Scalar>> interpolate_latents(const VectorX<Scalar>& a, const VectorX<Scalar>& b,
                                                 int steps) {
  if (steps < 2) throw std::invalid_argument("interpolate_latents: steps must be >= 2");
  if (a.size() != b.size()) throw std::invalid_argument("interpolate_latents: dimension mismatch");
  std::vector<VectorX<Scalar>> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    if (i == 0) {
      out.push_back(a);
    } else if (i == steps - 1) {
      out.push_back(b);
    } else {
      const Scalar t = static_cast<Scalar>(i) / static_cast<Scalar>(steps - 1);
      out.push_back((Scalar(1) - t) * a + t * b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PLY export.

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed palette; label i is drawn with kPalette[i % 16].
inline constexpr std::array<Rgb, 16> kPalette{{
    {31, 119, 180}, {255, 127, 14},  {44, 160, 44},   {214, 39, 40},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
    {188, 189, 34},  {23, 190, 207}, {174, 199, 232}, {255, 187, 120},
    {152, 223, 138}, {255, 152, 150}, {197, 176, 213}, {196, 156, 148},
}};
inline constexpr Rgb kUncolored{200, 200, 200};

struct ColorMode {
  enum class Kind { None, ByAncestor, ByStage } kind = Kind::None;
  /// Ancestor stage for ByAncestor.
  int level = 1;

  static ColorMode none() { return {}; }
  static ColorMode by_ancestor(int level) { return {Kind::ByAncestor, level}; }
  static ColorMode by_stage() { return {Kind::ByStage, 1}; }
};

/// ASCII PLY with float x, y, z and uchar red, green, blue per vertex.
void write_ply(const Points3<double>& points, const std::vector<Rgb>& colors,
               const std::filesystem::path& path);
/// Uses the palette when labels are given, the neutral color otherwise.
void export_ply(const Points3<double>& points, const std::vector<int>& labels,
                const std::filesystem::path& path);

/// Writes the final stage, colored per `mode`. ByStage writes one file per
/// stage named <stem>_d<stage><ext>: stage 1 colored by point index, deeper
/// stages by their stage-1 ancestor. Returns the files written.
template <typename Scalar>
std::vector<std::filesystem::path> export_ply(const GenerationTrace<Scalar>& trace, ColorMode mode,
                                              const std::filesystem::path& path);

std::filesystem::path stage_path(const std::filesystem::path& path, int stage);

struct PlyData {
  Eigen::Matrix3Xf points;
  std::vector<Rgb> colors;
};

/// Reads ASCII PLY files with a vertex element holding x, y, z and optional
/// red, green, blue properties (other properties are skipped).
PlyData read_ply(const std::filesystem::path& path);

}  // namespace rpg
