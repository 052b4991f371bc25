#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace bevgrid {

inline constexpr int kBoxDims = 11;
using BoxRow = std::array<double, kBoxDims>;

// Column layout of a box row: location (m), size (m), yaw as (sin, cos),
// velocity (m/s), attribute code (negative means "no attribute").
enum BoxField : int {
  kBoxX = 0,
  kBoxY,
  kBoxZ,
  kBoxLength,
  kBoxWidth,
  kBoxHeight,
  kBoxSinYaw,
  kBoxCosYaw,
  kBoxVx,
  kBoxVy,
  kBoxAttr,
};

inline double box_yaw(const BoxRow& r) { return std::atan2(r[kBoxSinYaw], r[kBoxCosYaw]); }

// M boxes with detection class ids (0..9) and confidence scores. Ground truth
// sets carry score 1.
struct BoxSet {
  std::vector<BoxRow> rows;
  std::vector<int> class_ids;
  std::vector<double> scores;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  void add(const BoxRow& row, int class_id, double score = 1.0) {
    rows.push_back(row);
    class_ids.push_back(class_id);
    scores.push_back(score);
  }
  // Throws std::invalid_argument on ragged columns, non-positive sizes, a
  // (sin, cos) pair off the unit circle by more than 1e-3, class ids outside
  // [0, 9] or scores outside [0, 1].
  void validate() const;

  bool operator==(const BoxSet&) const = default;
};

}  // namespace bevgrid
