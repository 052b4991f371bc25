#include "bevgrid/formats.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace bevgrid {

FormatError::FormatError(std::size_t line, std::string field, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + message),
      line_(line),
      field_(std::move(field)) {}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

// Line-oriented tokenizer with 1-based line tracking.
class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  // Next non-empty line split on whitespace; nullopt at end of input.
  std::optional<std::vector<std::string>> next() {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    ++line_no_;
    return std::nullopt;
  }

  // Next line, which must start with `keyword` and carry `args` more tokens.
  std::vector<std::string> expect(const std::string& keyword, std::size_t args) {
    auto tokens = next();
    if (!tokens) throw FormatError(line_no_, keyword, "missing section '" + keyword + "'");
    if ((*tokens)[0] != keyword) {
      throw FormatError(line_no_, keyword,
                        "expected '" + keyword + "', found '" + (*tokens)[0] + "'");
    }
    require_count(*tokens, args + 1, keyword);
    return *tokens;
  }

  std::vector<std::string> row(std::size_t count, const std::string& field) {
    auto tokens = next();
    if (!tokens) throw FormatError(line_no_, field, "unexpected end of file");
    require_count(*tokens, count, field);
    return *tokens;
  }

  void require_count(const std::vector<std::string>& tokens, std::size_t count,
                     const std::string& field) const {
    if (tokens.size() != count) {
      throw FormatError(line_no_, field,
                        "expected " + std::to_string(count) + " tokens, found " +
                            std::to_string(tokens.size()));
    }
  }

  double number(const std::string& tok, const std::string& field) const {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw FormatError(line_no_, field, "not a number: '" + tok + "'");
    }
    return v;
  }

  long long integer(const std::string& tok, const std::string& field) const {
    long long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw FormatError(line_no_, field, "not an integer: '" + tok + "'");
    }
    return v;
  }

  std::size_t count(const std::string& tok, const std::string& field) const {
    const long long v = integer(tok, field);
    if (v < 0) throw FormatError(line_no_, field, "count must be non-negative");
    return static_cast<std::size_t>(v);
  }

  void header(const std::string& magic, int version) {
    auto tokens = next();
    if (!tokens || (*tokens)[0] != magic) {
      throw FormatError(line_no_, "header", "expected '" + magic + "' header");
    }
    require_count(*tokens, 2, "header");
    const long long v = integer((*tokens)[1], "version");
    if (v != version) {
      throw FormatError(line_no_, "version",
                        "unsupported version " + std::to_string(v) + " (expected " +
                            std::to_string(version) + ")");
    }
  }

  // Error for `field` at the current line.
  FormatError error(const std::string& field, const std::string& message) const {
    return FormatError(line_no_, field, message);
  }

  std::size_t line() const { return line_no_; }
  std::istream& stream() { return is_; }

 private:
  std::istream& is_;
  std::size_t line_no_ = 0;
};

void write_matrix(std::ostream& os, const Mat4& m) {
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) os << ' ' << format_double(m(r, c));
  }
}

RigidTransform parse_transform(const LineReader& in, const std::vector<std::string>& tok,
                               std::size_t first, const std::string& field) {
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      m(r, c) = in.number(tok[first + static_cast<std::size_t>(4 * r + c)], field);
    }
  }
  try {
    return RigidTransform(m);
  } catch (const std::invalid_argument& e) {
    throw in.error(field, e.what());
  }
}

void write_box_row(std::ostream& os, const BoxSet& b, std::size_t m) {
  os << b.class_ids[m] << ' ' << format_double(b.scores[m]);
  for (double v : b.rows[m]) os << ' ' << format_double(v);
  os << '\n';
}

void parse_box_row(LineReader& in, BoxSet& out, const std::string& field) {
  const auto tok = in.row(2 + kBoxDims, field);
  BoxRow row{};
  for (int k = 0; k < kBoxDims; ++k) {
    row[static_cast<std::size_t>(k)] = in.number(tok[2 + static_cast<std::size_t>(k)], field);
  }
  out.add(row, static_cast<int>(in.integer(tok[0], field)), in.number(tok[1], field));
}

void expect_end(LineReader& in) {
  auto tokens = in.next();
  if (!tokens) throw in.error("end", "missing section 'end'");
  if ((*tokens)[0] != "end" || tokens->size() != 1) {
    throw in.error("end", "expected 'end', found '" + (*tokens)[0] + "'");
  }
  if (in.next()) throw in.error("end", "trailing data after 'end'");
}

void write_point_rows(std::ostream& os, const LabeledPointCloud& cloud) {
  os << "points " << cloud.size() << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    os << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
       << ' ' << cloud.labels[i] << '\n';
  }
}

LabeledPointCloud read_point_rows(LineReader& in) {
  const auto pts_tok = in.expect("points", 1);
  const std::size_t n_pts = in.count(pts_tok[1], "points");
  LabeledPointCloud cloud;
  cloud.points.reserve(n_pts);
  cloud.labels.reserve(n_pts);
  for (std::size_t i = 0; i < n_pts; ++i) {
    const auto tok = in.row(4, "point");
    cloud.points.emplace_back(in.number(tok[0], "point.x"), in.number(tok[1], "point.y"),
                              in.number(tok[2], "point.z"));
    cloud.labels.push_back(static_cast<int>(in.integer(tok[3], "point.label")));
  }
  try {
    cloud.validate();
  } catch (const std::invalid_argument& e) {
    throw in.error("points", e.what());
  }
  return cloud;
}

}  // namespace

void write_scene(std::ostream& os, const Scene& scene) {
  os << "bevgrid-scene " << kSceneFormatVersion << '\n';
  os << "seed " << scene.seed << '\n';
  os << "image " << scene.rig.image_height() << ' ' << scene.rig.image_width() << '\n';
  os << "cameras " << scene.rig.size() << '\n';
  for (const Camera& cam : scene.rig.cameras()) {
    const CameraIntrinsics& k = cam.intrinsics;
    os << "camera " << format_double(k.fx()) << ' ' << format_double(k.fy()) << ' '
       << format_double(k.cx()) << ' ' << format_double(k.cy());
    write_matrix(os, cam.cam_to_lidar.matrix());
    os << '\n';
  }
  write_point_rows(os, scene.cloud);
  os << "boxes " << scene.boxes.size() << '\n';
  for (std::size_t m = 0; m < scene.boxes.size(); ++m) write_box_row(os, scene.boxes, m);
  os << "ego\n";
  os << "curr";
  write_matrix(os, scene.ego_curr.matrix());
  os << "\nadj";
  write_matrix(os, scene.ego_adj.matrix());
  os << "\nend\n";
}

Scene read_scene(std::istream& is) {
  LineReader in(is);
  in.header("bevgrid-scene", kSceneFormatVersion);
  const auto seed_tok = in.expect("seed", 1);
  const long long seed = in.integer(seed_tok[1], "seed");
  const auto image = in.expect("image", 2);
  const long long img_h = in.integer(image[1], "image");
  const long long img_w = in.integer(image[2], "image");

  const auto cams_tok = in.expect("cameras", 1);
  const std::size_t n_cams = in.count(cams_tok[1], "cameras");
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < n_cams; ++i) {
    const auto tok = in.row(1 + 4 + 16, "camera");
    if (tok[0] != "camera") throw in.error("camera", "expected 'camera' row");
    try {
      cams.push_back({CameraIntrinsics(in.number(tok[1], "camera.fx"), in.number(tok[2], "camera.fy"),
                                       in.number(tok[3], "camera.cx"), in.number(tok[4], "camera.cy")),
                      parse_transform(in, tok, 5, "camera.cam_to_lidar")});
    } catch (const std::invalid_argument& e) {
      throw in.error("camera", e.what());
    }
  }
  std::optional<CameraRig> rig;
  try {
    rig.emplace(std::move(cams), static_cast<int>(img_h), static_cast<int>(img_w));
  } catch (const std::invalid_argument& e) {
    throw in.error("cameras", e.what());
  }

  LabeledPointCloud cloud = read_point_rows(in);

  const auto box_tok = in.expect("boxes", 1);
  const std::size_t n_boxes = in.count(box_tok[1], "boxes");
  BoxSet boxes;
  for (std::size_t i = 0; i < n_boxes; ++i) parse_box_row(in, boxes, "box");
  try {
    boxes.validate();
  } catch (const std::invalid_argument& e) {
    throw in.error("boxes", e.what());
  }

  in.expect("ego", 0);
  const auto curr = in.expect("curr", 16);
  const RigidTransform ego_curr = parse_transform(in, curr, 1, "ego.curr");
  const auto adj = in.expect("adj", 16);
  const RigidTransform ego_adj = parse_transform(in, adj, 1, "ego.adj");
  expect_end(in);

  return Scene{std::move(*rig), std::move(cloud), std::move(boxes), ego_curr, ego_adj,
               static_cast<std::uint64_t>(seed)};
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_scene(os, scene);
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_scene(is);
}

void write_boxes(std::ostream& os, const std::vector<BoxSet>& frames) {
  os << "bevgrid-boxes " << kBoxFormatVersion << '\n';
  os << "frames " << frames.size() << '\n';
  for (const BoxSet& b : frames) {
    os << "frame " << b.size() << '\n';
    for (std::size_t m = 0; m < b.size(); ++m) write_box_row(os, b, m);
  }
  os << "end\n";
}

std::vector<BoxSet> read_boxes(std::istream& is) {
  LineReader in(is);
  in.header("bevgrid-boxes", kBoxFormatVersion);
  const auto frames_tok = in.expect("frames", 1);
  const std::size_t n_frames = in.count(frames_tok[1], "frames");
  std::vector<BoxSet> frames(n_frames);
  for (BoxSet& b : frames) {
    const auto frame_tok = in.expect("frame", 1);
    const std::size_t m = in.count(frame_tok[1], "frame");
    for (std::size_t i = 0; i < m; ++i) parse_box_row(in, b, "box");
    try {
      b.validate();
    } catch (const std::invalid_argument& e) {
      throw in.error("frame", e.what());
    }
  }
  expect_end(in);
  return frames;
}

void save_boxes(const std::filesystem::path& path, const std::vector<BoxSet>& frames) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_boxes(os, frames);
}

std::vector<BoxSet> load_boxes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_boxes(is);
}

void write_points(std::ostream& os, const LabeledPointCloud& cloud) {
  os << "bevgrid-points " << kPointsFormatVersion << '\n';
  write_point_rows(os, cloud);
  os << "end\n";
}

LabeledPointCloud read_points(std::istream& is) {
  LineReader in(is);
  in.header("bevgrid-points", kPointsFormatVersion);
  LabeledPointCloud cloud = read_point_rows(in);
  expect_end(in);
  return cloud;
}

void save_points(const std::filesystem::path& path, const LabeledPointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_points(os, cloud);
}

LabeledPointCloud load_points(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_points(is);
}

// ---------------------------------------------------------------------------
// Grid files

GridFile GridFile::of(const BinaryVoxelGrid& g, std::optional<VoxelGridSpec> spec) {
  GridFile f;
  f.kind = GridKind::kBinary;
  f.binary = g;
  f.voxel_spec = spec;
  return f;
}

GridFile GridFile::of(const SemanticVoxelGrid& g, std::optional<VoxelGridSpec> spec) {
  GridFile f;
  f.kind = GridKind::kSemantic;
  f.semantic = g;
  f.voxel_spec = spec;
  return f;
}

GridFile GridFile::of(const Tensor& t) {
  GridFile f;
  f.kind = GridKind::kFeature;
  f.feature = t;
  return f;
}

GridFile GridFile::of(const BevFeature& b) {
  GridFile f = of(b.values);
  f.bev_grid = b.grid;
  return f;
}

BevFeature GridFile::bev_feature() const {
  if (kind != GridKind::kFeature || !bev_grid || feature.rank() != 3) {
    throw std::invalid_argument("grid file does not hold a BEV feature");
  }
  return BevFeature{feature, *bev_grid};
}

namespace {

template <class T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <class T>
T get_le(const std::string& in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

const char* kind_name(GridKind k) {
  switch (k) {
    case GridKind::kBinary: return "binary";
    case GridKind::kSemantic: return "semantic";
    case GridKind::kFeature: return "feature";
  }
  return "?";
}

const char* dtype_name(GridKind k) {
  switch (k) {
    case GridKind::kBinary: return "u8";
    case GridKind::kSemantic: return "i32+u8";
    case GridKind::kFeature: return "f64";
  }
  return "?";
}

}  // namespace

void write_grid(std::ostream& os, const GridFile& grid) {
  std::vector<std::size_t> dims;
  std::string payload;
  switch (grid.kind) {
    case GridKind::kBinary:
      dims.assign(grid.binary.dims.begin(), grid.binary.dims.end());
      for (std::uint8_t v : grid.binary.values) put_le(payload, v);
      break;
    case GridKind::kSemantic:
      grid.semantic.validate();
      dims.assign(grid.semantic.dims.begin(), grid.semantic.dims.end());
      for (std::int32_t v : grid.semantic.class_ids) put_le(payload, v);
      for (std::uint8_t v : grid.semantic.labeled_mask) put_le(payload, v);
      break;
    case GridKind::kFeature:
      dims = grid.feature.shape();
      for (double v : grid.feature.data()) put_le(payload, v);
      break;
  }
  os << "bevgrid-grid " << kGridFormatVersion << '\n';
  os << "kind " << kind_name(grid.kind) << '\n';
  os << "dtype " << dtype_name(grid.kind) << '\n';
  os << "dims " << dims.size();
  for (std::size_t d : dims) os << ' ' << d;
  os << '\n';
  if (grid.kind == GridKind::kSemantic) os << "classes " << grid.semantic.num_classes << '\n';
  if (grid.voxel_spec) {
    os << "spec voxel";
    for (int a = 0; a < 3; ++a) {
      os << ' ' << format_double(grid.voxel_spec->axis(a).min) << ' '
         << format_double(grid.voxel_spec->axis(a).max);
    }
    for (int a = 0; a < 3; ++a) os << ' ' << format_double(grid.voxel_spec->axis(a).resolution);
  } else if (grid.bev_grid) {
    const BevGrid& b = *grid.bev_grid;
    os << "spec bev " << format_double(b.x.min) << ' ' << format_double(b.x.max) << ' '
       << format_double(b.y.min) << ' ' << format_double(b.y.max) << ' '
       << format_double(b.x.resolution) << ' ' << format_double(b.y.resolution);
  } else {
    os << "spec none";
  }
  os << '\n';
  os << "payload " << payload.size() << '\n';
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

GridFile read_grid(std::istream& is) {
  LineReader in(is);
  in.header("bevgrid-grid", kGridFormatVersion);
  GridFile out;
  const auto kind = in.expect("kind", 1);
  if (kind[1] == "binary") {
    out.kind = GridKind::kBinary;
  } else if (kind[1] == "semantic") {
    out.kind = GridKind::kSemantic;
  } else if (kind[1] == "feature") {
    out.kind = GridKind::kFeature;
  } else {
    throw in.error("kind", "unknown grid kind '" + kind[1] + "'");
  }
  const auto dtype = in.expect("dtype", 1);
  if (dtype[1] != dtype_name(out.kind)) {
    throw in.error("dtype", "dtype '" + dtype[1] + "' does not match kind '" + kind[1] + "'");
  }
  auto dims_tok = in.next();
  if (!dims_tok || (*dims_tok)[0] != "dims" || dims_tok->size() < 2) {
    throw in.error("dims", "missing section 'dims'");
  }
  const std::size_t rank = in.count((*dims_tok)[1], "dims");
  in.require_count(*dims_tok, 2 + rank, "dims");
  std::vector<std::size_t> dims(rank);
  std::size_t elements = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = in.count((*dims_tok)[2 + i], "dims");
    elements *= dims[i];
  }
  if (out.kind != GridKind::kFeature && rank != 3) {
    throw in.error("dims", "voxel grids must have rank 3");
  }
  int classes = 0;
  if (out.kind == GridKind::kSemantic) {
    const auto c = in.expect("classes", 1);
    classes = static_cast<int>(in.integer(c[1], "classes"));
    if (classes < 2) throw in.error("classes", "need at least two classes");
  }
  auto spec_tok = in.next();
  if (!spec_tok || (*spec_tok)[0] != "spec" || spec_tok->size() < 2) {
    throw in.error("spec", "missing section 'spec'");
  }
  const std::string& spec_kind = (*spec_tok)[1];
  if (spec_kind == "voxel") {
    in.require_count(*spec_tok, 11, "spec");
    std::array<double, 9> v{};
    for (std::size_t i = 0; i < 9; ++i) v[i] = in.number((*spec_tok)[2 + i], "spec");
    try {
      out.voxel_spec.emplace(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
    } catch (const std::invalid_argument& e) {
      throw in.error("spec", e.what());
    }
  } else if (spec_kind == "bev") {
    in.require_count(*spec_tok, 8, "spec");
    std::array<double, 6> v{};
    for (std::size_t i = 0; i < 6; ++i) v[i] = in.number((*spec_tok)[2 + i], "spec");
    try {
      out.bev_grid = BevGrid::from(VoxelGridSpec(v[0], v[1], v[2], v[3], 0.0, 1.0, v[4], v[5], 1.0));
    } catch (const std::invalid_argument& e) {
      throw in.error("spec", e.what());
    }
  } else if (spec_kind != "none") {
    throw in.error("spec", "unknown spec kind '" + spec_kind + "'");
  } else {
    in.require_count(*spec_tok, 2, "spec");
  }
  const auto payload_tok = in.expect("payload", 1);
  const std::size_t bytes = in.count(payload_tok[1], "payload");
  std::size_t expected = 0;
  switch (out.kind) {
    case GridKind::kBinary: expected = elements; break;
    case GridKind::kSemantic: expected = elements * 5; break;
    case GridKind::kFeature: expected = elements * 8; break;
  }
  if (bytes != expected) {
    throw in.error("payload", "declares " + std::to_string(bytes) + " bytes, dims require " +
                                  std::to_string(expected));
  }
  std::string payload(bytes, '\0');
  in.stream().read(payload.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.stream().gcount()) != bytes) {
    throw in.error("payload", "truncated: expected " + std::to_string(bytes) + " bytes, got " +
                                  std::to_string(in.stream().gcount()));
  }
  if (in.stream().peek() != std::char_traits<char>::eof()) {
    throw in.error("payload", "trailing data after payload");
  }

  std::array<int, 3> d3{};
  if (rank == 3) {
    d3 = {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
  }
  switch (out.kind) {
    case GridKind::kBinary:
      out.binary = BinaryVoxelGrid(d3);
      for (std::size_t i = 0; i < elements; ++i) {
        out.binary.values[i] = get_le<std::uint8_t>(payload, i);
        if (out.binary.values[i] > 1) throw in.error("payload", "binary grid value not 0/1");
      }
      break;
    case GridKind::kSemantic:
      out.semantic = SemanticVoxelGrid(d3, classes);
      for (std::size_t i = 0; i < elements; ++i) {
        out.semantic.class_ids[i] = get_le<std::int32_t>(payload, 4 * i);
        out.semantic.labeled_mask[i] = get_le<std::uint8_t>(payload, 4 * elements + i);
      }
      try {
        out.semantic.validate();
      } catch (const std::invalid_argument& e) {
        throw in.error("payload", e.what());
      }
      break;
    case GridKind::kFeature:
      out.feature = Tensor(dims);
      for (std::size_t i = 0; i < elements; ++i) {
        out.feature.storage()[i] = get_le<double>(payload, 8 * i);
      }
      break;
  }
  if ((out.voxel_spec && out.voxel_spec->dims() != d3 && out.kind != GridKind::kFeature)) {
    throw in.error("spec", "spec dims do not match grid dims");
  }
  return out;
}

void save_grid(const std::filesystem::path& path, const GridFile& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_grid(os, grid);
}

GridFile load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_grid(is);
}

}  // namespace bevgrid
