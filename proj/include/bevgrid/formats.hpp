#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevgrid/boxes.hpp"
#include "bevgrid/scenegen.hpp"
#include "bevgrid/tensor.hpp"
#include "bevgrid/view_transform.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

inline constexpr int kSceneFormatVersion = 1;
inline constexpr int kGridFormatVersion = 1;
inline constexpr int kBoxFormatVersion = 1;
inline constexpr int kPointsFormatVersion = 1;

// Structured parse failure: 1-based line number, offending field and reason.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, std::string field, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// Scene files: see docs/formats.md.
void write_scene(std::ostream& os, const Scene& scene);
Scene read_scene(std::istream& is);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

// Box files hold one or more frames of boxes.
void write_boxes(std::ostream& os, const std::vector<BoxSet>& frames);
std::vector<BoxSet> read_boxes(std::istream& is);
void save_boxes(const std::filesystem::path& path, const std::vector<BoxSet>& frames);
std::vector<BoxSet> load_boxes(const std::filesystem::path& path);

// Labelled point clouds on their own.
void write_points(std::ostream& os, const LabeledPointCloud& cloud);
LabeledPointCloud read_points(std::istream& is);
void save_points(const std::filesystem::path& path, const LabeledPointCloud& cloud);
LabeledPointCloud load_points(const std::filesystem::path& path);

// Grid files: ASCII header followed by a little-endian binary payload.
enum class GridKind { kBinary, kSemantic, kFeature };

struct GridFile {
  GridKind kind = GridKind::kFeature;
  std::optional<VoxelGridSpec> voxel_spec;
  std::optional<BevGrid> bev_grid;
  BinaryVoxelGrid binary;      // kBinary
  SemanticVoxelGrid semantic;  // kSemantic
  Tensor feature;              // kFeature

  static GridFile of(const BinaryVoxelGrid& g, std::optional<VoxelGridSpec> spec = {});
  static GridFile of(const SemanticVoxelGrid& g, std::optional<VoxelGridSpec> spec = {});
  static GridFile of(const Tensor& t);
  static GridFile of(const BevFeature& f);

  BevFeature bev_feature() const;  // requires kFeature with a BEV grid
};

void write_grid(std::ostream& os, const GridFile& grid);
GridFile read_grid(std::istream& is);
void save_grid(const std::filesystem::path& path, const GridFile& grid);
GridFile load_grid(const std::filesystem::path& path);

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace bevgrid
