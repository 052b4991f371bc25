#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>

#include "bevgrid/formats.hpp"
#include "fixtures.hpp"

using namespace bevgrid;

namespace {

const char* kMinimalScene =
    "bevgrid-scene 1\n"
    "seed 12\n"
    "image 4 6\n"
    "cameras 1\n"
    "camera 2 2.5 3 2 1 0 0 0.5 0 1 0 -1 0 0 1 1.5 0 0 0 1\n"
    "points 1\n"
    "1.25 -3 0.5 11\n"
    "boxes 0\n"
    "ego\n"
    "curr 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n"
    "adj 1 0 0 -2 0 1 0 0 0 0 1 0 0 0 0 1\n"
    "end\n";

template <class F>
FormatError parse_error(const std::string& text, F parse) {
  std::istringstream is(text);
  try {
    parse(is);
  } catch (const FormatError& e) {
    return e;
  }
  FAIL("no FormatError for input");
  return FormatError(0, "", "");
}

Scene read(const std::string& s) {
  std::istringstream is(s);
  return read_scene(is);
}

}  // namespace

TEST_CASE("hand-written minimal scene") {
  const Scene s = read(kMinimalScene);
  CHECK(s.seed == 12);
  CHECK(s.rig.size() == 1);
  CHECK(s.rig.image_height() == 4);
  CHECK(s.rig.image_width() == 6);
  CHECK(s.rig[0].intrinsics == CameraIntrinsics(2, 2.5, 3, 2));
  CHECK(s.rig[0].cam_to_lidar.translation() == Vec3(0.5, -1, 1.5));
  CHECK(s.rig[0].cam_to_lidar.rotation() == Mat3::Identity());
  REQUIRE(s.cloud.size() == 1);
  CHECK(s.cloud.points[0] == Vec3(1.25, -3, 0.5));
  CHECK(s.cloud.labels[0] == semantic::kDriveableSurface);
  CHECK(s.boxes.empty());
  CHECK(s.ego_curr.matrix() == Mat4::Identity());
  CHECK(s.ego_adj.translation() == Vec3(-2, 0, 0));

  std::ostringstream os;
  write_scene(os, s);
  CHECK(os.str() == kMinimalScene);
}

TEST_CASE("scene parse errors") {
  const std::string text = kMinimalScene;
  auto parse = [](std::istream& is) { read_scene(is); };

  const FormatError cut = parse_error(text.substr(0, text.find("boxes")), parse);
  CHECK(std::string(cut.what()).find("missing section 'boxes'") != std::string::npos);
  CHECK(cut.field() == "boxes");
  CHECK(parse_error(text.substr(0, text.find("ego")), parse).field() == "ego");

  std::string version = text;
  version.replace(0, 15, "bevgrid-scene 7");
  CHECK(parse_error(version, parse).line() == 1);

  std::string bad = text;
  bad.replace(bad.find("1.25"), 4, "1.2x");
  const FormatError num = parse_error(bad, parse);
  CHECK(num.line() == 7);
  CHECK(std::string(num.what()).find("line 7") != std::string::npos);

  std::string label = text;
  label.replace(label.find(" 11\n"), 4, " 40\n");
  CHECK(parse_error(label, parse).line() == 7);

  std::string rot = text;
  rot.replace(rot.find("camera 2 2.5 3 2 1"), 18, "camera 2 2.5 3 2 2");
  CHECK(parse_error(rot, parse).field() == "camera.cam_to_lidar");

  std::string extra = text;
  extra.replace(extra.find("points 1"), 8, "points 2");
  parse_error(extra, parse);
  CHECK(parse_error(text + "junk\n", parse).line() == 13);
}

TEST_CASE("generated scenes round-trip") {
  for (std::uint64_t seed : {0ULL, 3ULL}) {
    const Scene s = generate_scene(seed, SceneConfig{});
    std::stringstream ss;
    write_scene(ss, s);
    const std::string first = ss.str();
    const Scene back = read_scene(ss);
    std::ostringstream again;
    write_scene(again, back);
    CHECK(again.str() == first);
    CHECK(back.cloud.points == s.cloud.points);
    CHECK(back.boxes == s.boxes);
  }
}

TEST_CASE("format_double round-trips") {
  fixture::Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(rng.uniform(-1, 1), rng.integer(-1070, 1020));
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-0.0) == "-0");
  CHECK(format_double(1e300) == "1e+300");
}

TEST_CASE("box files") {
  std::vector<BoxSet> frames(3);
  frames[0].add({1, 2, 3, 4, 5, 6, 0, 1, 0.5, -0.5, 2}, 4, 0.25);
  frames[2].add({-1, 0.1, 0, 1, 1, 1, 1, 0, 0, 0, -1}, 9, 1.0);
  std::stringstream ss;
  write_boxes(ss, frames);
  CHECK(read_boxes(ss) == frames);

  auto parse = [](std::istream& is) { read_boxes(is); };
  std::ostringstream os;
  write_boxes(os, frames);
  std::string bad = os.str();
  bad.replace(bad.find("\n4 0.25"), 7, "\n12 0.25");
  parse_error(bad, parse);
}

TEST_CASE("points files") {
  fixture::Rng rng(6);
  const LabeledPointCloud c = fixture::random_cloud(rng, VoxelGridSpec(0, 4, 0, 4, 0, 4, 1, 1, 1), 50);
  LabeledPointCloud finite;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.points[i].allFinite()) {
      finite.points.push_back(c.points[i]);
      finite.labels.push_back(c.labels[i]);
    }
  }
  std::stringstream ss;
  write_points(ss, finite);
  const LabeledPointCloud back = read_points(ss);
  CHECK(back.points == finite.points);
  CHECK(back.labels == finite.labels);
}

TEST_CASE("grid files") {
  fixture::Rng rng(7);
  const VoxelGridSpec spec(-1.6, 1.6, -0.8, 0.8, 0, 2.4, 0.8, 0.4, 0.8);
  const LabeledPointCloud cloud = fixture::random_cloud(rng, spec, 60);
  auto round = [](const GridFile& g) {
    std::stringstream ss;
    write_grid(ss, g);
    return read_grid(ss);
  };

  const BinaryVoxelGrid b = binary_occupancy(spec, cloud.points);
  const GridFile rb = round(GridFile::of(b, spec));
  CHECK(rb.kind == GridKind::kBinary);
  CHECK(rb.binary == b);
  CHECK(rb.voxel_spec == spec);

  const SemanticVoxelGrid s = semantic_occupancy(spec, cloud);
  const GridFile rs = round(GridFile::of(s));
  CHECK(rs.semantic == s);
  CHECK_FALSE(rs.voxel_spec.has_value());

  Tensor t = fixture::random_tensor(rng, {2, 3, 4, 5});
  t.storage()[0] = std::numeric_limits<double>::infinity();
  t.storage()[1] = std::numeric_limits<double>::denorm_min();
  const GridFile rt = round(GridFile::of(t));
  CHECK(rt.feature == t);

  const BevFeature bev{fixture::random_tensor(rng, {3, 4, 4}), BevGrid::from(spec)};
  const BevFeature rbev = round(GridFile::of(bev)).bev_feature();
  CHECK(rbev.values == bev.values);
  CHECK(rbev.grid == bev.grid);

  // Header then payload: exact byte count for a 1x1x2 binary grid.
  BinaryVoxelGrid tiny({1, 1, 2});
  tiny.values = {1, 0};
  std::ostringstream os;
  write_grid(os, GridFile::of(tiny));
  CHECK(os.str() == "bevgrid-grid 1\nkind binary\ndtype u8\ndims 3 1 1 2\nspec none\npayload 2\n" +
                        std::string("\x01\x00", 2));

  auto parse = [](std::istream& is) { read_grid(is); };
  const std::string full = os.str();
  CHECK(parse_error(full.substr(0, full.size() - 1), parse).field() == "payload");
  std::string bad_value = full;
  bad_value.back() = '\x07';
  parse_error(bad_value, parse);
  CHECK(parse_error(full.substr(0, 20), parse).line() >= 2);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "bevgrid-format-test";
  std::filesystem::create_directories(dir);
  const Scene s = read(kMinimalScene);
  save_scene(dir / "s.txt", s);
  CHECK(load_scene(dir / "s.txt").cloud.points == s.cloud.points);
  CHECK_THROWS_AS(load_scene(dir / "missing.txt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
