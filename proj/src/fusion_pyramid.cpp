#include "bevgrid/fusion_pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bevgrid {

FusionAdapter FusionAdapter::identity(std::size_t channels, FusionDirection dir) {
  FusionAdapter a{Tensor({channels, channels}), dir};
  for (std::size_t i = 0; i < channels; ++i) a.weight(i, i) = 1.0;
  return a;
}

FusionAdapter FusionAdapter::zeros(std::size_t out_channels, std::size_t in_channels,
                                   FusionDirection dir) {
  return FusionAdapter{Tensor({out_channels, in_channels}), dir};
}

void FusionAdapter::validate() const {
  require_rank(weight, 2, "FusionAdapter weight");
  for (double v : weight.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("FusionAdapter: non-finite weight");
  }
}

Tensor FusionAdapter::apply(const Tensor& f) const {
  require_rank(f, 3, "FusionAdapter input");
  if (f.dim(0) != in_channels()) {
    throw std::invalid_argument("FusionAdapter: expects " + std::to_string(in_channels()) +
                                " channels, got " + std::to_string(f.dim(0)));
  }
  const std::size_t plane = f.dim(1) * f.dim(2);
  Tensor out({out_channels(), f.dim(1), f.dim(2)});
  const double* src = f.data().data();
  double* dst = out.data().data();
  for (std::size_t o = 0; o < out_channels(); ++o) {
    for (std::size_t i = 0; i < in_channels(); ++i) {
      const double w = weight(o, i);
      if (w == 0.0) continue;
      const double* s = src + i * plane;
      double* d = dst + o * plane;
      for (std::size_t p = 0; p < plane; ++p) d[p] += w * s[p];
    }
  }
  return out;
}

void FusionConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("FusionConfig: lambda must lie in [0, 1], got " +
                                std::to_string(lambda));
  }
}

AdapterPair AdapterPair::identity(std::size_t channels) {
  return {FusionAdapter::identity(channels, FusionDirection::kOccToDet),
          FusionAdapter::identity(channels, FusionDirection::kDetToOcc)};
}

void PyramidFeatures::validate() const {
  for (std::size_t k = 0; k < levels.size(); ++k) {
    require_rank(levels[k], 3, "PyramidFeatures level");
  }
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const Tensor& fine = levels[k - 1];
    const Tensor& coarse = levels[k];
    if (coarse.dim(0) != fine.dim(0)) {
      throw std::invalid_argument("PyramidFeatures: channel count differs between levels");
    }
    if (fine.dim(1) != 2 * coarse.dim(1) || fine.dim(2) != 2 * coarse.dim(2)) {
      throw std::invalid_argument("PyramidFeatures: level " + std::to_string(k) + " is " +
                                  shape_string(coarse.shape()) + ", expected half of " +
                                  shape_string(fine.shape()));
    }
  }
}

Tensor upsample_bilinear(const Tensor& f, int factor) {
  require_rank(f, 3, "upsample_bilinear");
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
  if (factor == 1) return f;
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out({c, oh, ow});

  struct Tap {
    std::size_t i0, i1;
    double t;
  };
  auto taps = [factor](std::size_t n_in, std::size_t n_out) {
    std::vector<Tap> v(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double src = std::max(0.0, (o + 0.5) / factor - 0.5);
      const std::size_t i0 = std::min(static_cast<std::size_t>(src), n_in - 1);
      v[o] = {i0, std::min(i0 + 1, n_in - 1), src - static_cast<double>(i0)};
    }
    return v;
  };
  const std::vector<Tap> rows = taps(h, oh), cols = taps(w, ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const Tap& r = rows[y];
      for (std::size_t x = 0; x < ow; ++x) {
        const Tap& q = cols[x];
        const double top = (1 - q.t) * f(ch, r.i0, q.i0) + q.t * f(ch, r.i0, q.i1);
        const double bottom = (1 - q.t) * f(ch, r.i1, q.i0) + q.t * f(ch, r.i1, q.i1);
        out(ch, y, x) = (1 - r.t) * top + r.t * bottom;
      }
    }
  }
  return out;
}

BranchPair modality_fuse(const Tensor& det, const Tensor& occ,
                         const FusionAdapter& occ_to_det,
                         const FusionAdapter& det_to_occ,
                         const FusionConfig& cfg) {
  cfg.validate();
  require_rank(det, 3, "modality_fuse det");
  require_rank(occ, 3, "modality_fuse occ");
  occ_to_det.validate();
  det_to_occ.validate();
  if (det.dim(1) != occ.dim(1) || det.dim(2) != occ.dim(2)) {
    throw std::invalid_argument("modality_fuse: spatial dims differ (" +
                                shape_string(det.shape()) + " vs " +
                                shape_string(occ.shape()) + ")");
  }
  if (occ_to_det.in_channels() != occ.dim(0) || occ_to_det.out_channels() != det.dim(0) ||
      det_to_occ.in_channels() != det.dim(0) || det_to_occ.out_channels() != occ.dim(0)) {
    throw std::invalid_argument("modality_fuse: adapter shapes incompatible with channels");
  }
  if (cfg.lambda == 1.0) return {det, occ};

  const double lam = cfg.lambda;
  BranchPair out{occ_to_det.apply(occ), det_to_occ.apply(det)};
  auto blend = [lam](Tensor& mixed, const Tensor& own) {
    auto m = mixed.data();
    auto o = own.data();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (1.0 - lam) * m[i] + lam * o[i];
  };
  blend(out.det, det);
  blend(out.occ, occ);
  return out;
}

namespace {

void add_inplace(Tensor& acc, const Tensor& skip) {
  if (acc.shape() != skip.shape()) {
    throw std::invalid_argument("pyramid skip connection: " + shape_string(acc.shape()) +
                                " vs " + shape_string(skip.shape()));
  }
  auto a = acc.data();
  auto s = skip.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s[i];
}

}  // namespace

Tensor pyramid_decode(const PyramidFeatures& pyr) {
  pyr.validate();
  Tensor x = pyr.levels[2];
  for (int level = 2; level >= 0; --level) {
    x = upsample_bilinear(x, 2);
    if (level > 0) add_inplace(x, pyr.levels[static_cast<std::size_t>(level - 1)]);
  }
  return x;
}

BranchPair pyramid_fuse(const PyramidFeatures& det, const PyramidFeatures& occ,
                        std::span<const AdapterPair, 3> adapters,
                        const FusionConfig& cfg) {
  cfg.validate();
  det.validate();
  occ.validate();
  for (std::size_t k = 0; k < 3; ++k) {
    if (det.levels[k].dim(1) != occ.levels[k].dim(1) ||
        det.levels[k].dim(2) != occ.levels[k].dim(2)) {
      throw std::invalid_argument("pyramid_fuse: branch level " + std::to_string(k) +
                                  " dims differ");
    }
  }
  if (cfg.lambda == 1.0) return {pyramid_decode(det), pyramid_decode(occ)};

  BranchPair x{det.levels[2], occ.levels[2]};
  for (int level = 2; level >= 0; --level) {
    const AdapterPair& a = adapters[static_cast<std::size_t>(level)];
    x = modality_fuse(x.det, x.occ, a.occ_to_det, a.det_to_occ, cfg);
    x.det = upsample_bilinear(x.det, 2);
    x.occ = upsample_bilinear(x.occ, 2);
    if (level > 0) {
      add_inplace(x.det, det.levels[static_cast<std::size_t>(level - 1)]);
      add_inplace(x.occ, occ.levels[static_cast<std::size_t>(level - 1)]);
    }
  }
  return x;
}

}  // namespace bevgrid
