#include "bevgrid/boxes.hpp"

#include <stdexcept>
#include <string>

#include "bevgrid/classes.hpp"

namespace bevgrid {

void BoxSet::validate() const {
  if (class_ids.size() != rows.size() || scores.size() != rows.size()) {
    throw std::invalid_argument("BoxSet: rows, class ids and scores differ in length");
  }
  for (std::size_t m = 0; m < rows.size(); ++m) {
    const BoxRow& r = rows[m];
    const std::string where = "BoxSet row " + std::to_string(m) + ": ";
    for (double v : r) {
      if (!std::isfinite(v)) throw std::invalid_argument(where + "non-finite value");
    }
    if (!(r[kBoxLength] > 0 && r[kBoxWidth] > 0 && r[kBoxHeight] > 0)) {
      throw std::invalid_argument(where + "size entries must be positive");
    }
    const double norm = r[kBoxSinYaw] * r[kBoxSinYaw] + r[kBoxCosYaw] * r[kBoxCosYaw];
    if (std::abs(norm - 1.0) > 1e-3) {
      throw std::invalid_argument(where + "sin^2 + cos^2 = " + std::to_string(norm));
    }
    if (class_ids[m] < 0 || class_ids[m] >= kNumDetectionClasses) {
      throw std::invalid_argument(where + "class id " + std::to_string(class_ids[m]));
    }
    if (!(scores[m] >= 0.0 && scores[m] <= 1.0)) {
      throw std::invalid_argument(where + "score outside [0, 1]");
    }
  }
}

}  // namespace bevgrid
