#pragma once

#include <array>
#include <span>

#include "bevgrid/tensor.hpp"

namespace bevgrid {

enum class FusionDirection { kOccToDet, kDetToOcc };

// Per-cell linear channel map (C_out x C_in) carrying features between the
// detection and occupancy branches.
struct FusionAdapter {
  Tensor weight;
  FusionDirection direction = FusionDirection::kOccToDet;

  static FusionAdapter identity(std::size_t channels, FusionDirection dir);
  static FusionAdapter zeros(std::size_t out_channels, std::size_t in_channels,
                             FusionDirection dir);

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  void validate() const;
  // f is C_in x X x Y; result is C_out x X x Y.
  Tensor apply(const Tensor& f) const;
};

struct FusionConfig {
  double lambda = 0.9;
  void validate() const;
};

struct AdapterPair {
  FusionAdapter occ_to_det;
  FusionAdapter det_to_occ;

  static AdapterPair identity(std::size_t channels);
};

// Three C x X x Y levels at 1/2, 1/4 and 1/8 of full resolution (index 0 is
// the finest). Spatial dims halve exactly from one level to the next and all
// levels share one channel count.
struct PyramidFeatures {
  std::array<Tensor, 3> levels;
  void validate() const;
};

struct BranchPair {
  Tensor det;
  Tensor occ;
};

// align_corners=false bilinear upsampling of a C x X x Y plane.
Tensor upsample_bilinear(const Tensor& f, int factor);

// Simultaneous cross-branch update:
//   det' = (1 - lambda) * G_occ->det(occ) + lambda * det
//   occ' = (1 - lambda) * G_det->occ(det) + lambda * occ
// lambda == 1 returns the inputs untouched.
BranchPair modality_fuse(const Tensor& det, const Tensor& occ,
                         const FusionAdapter& occ_to_det,
                         const FusionAdapter& det_to_occ,
                         const FusionConfig& cfg);

// Decodes both pyramids to full resolution. From the 1/8 level, each of the
// three steps fuses with that level's adapters, upsamples both branches x2 and
// adds the next finer level where one exists. adapters[k] serves levels[k].
// lambda == 1 takes the fusion-free path of pyramid_decode.
BranchPair pyramid_fuse(const PyramidFeatures& det, const PyramidFeatures& occ,
                        std::span<const AdapterPair, 3> adapters,
                        const FusionConfig& cfg);

// Fusion-free decode of a single branch.
Tensor pyramid_decode(const PyramidFeatures& pyr);

}  // namespace bevgrid
