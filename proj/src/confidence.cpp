#include "rfdeep/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rfdeep/error.hpp"
#include "rfdeep/numeric.hpp"

namespace rfdeep {

std::string_view method_name(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::MaxSoftmax: return "maxsoftmax";
    case ScoreMethod::MaxLogit: return "maxlogit";
    case ScoreMethod::Energy: return "energy";
    case ScoreMethod::Entropy: return "entropy";
  }
  return "";
}

std::string_view method_display_name(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::MaxSoftmax: return "MaxSoftmax";
    case ScoreMethod::MaxLogit: return "MaxLogits";
    case ScoreMethod::Energy: return "Energy";
    case ScoreMethod::Entropy: return "Entropy";
  }
  return "";
}

ScoreMethod parse_method(std::string_view s) {
  for (ScoreMethod m : kAllScoreMethods) {
    if (s == method_name(m) || s == method_display_name(m)) return m;
  }
  throw ConfigError("unknown score method '" + std::string(s) + "'");
}

std::array<double, 2> voxel_softmax(double l0, double l1) {
  const double m = std::max(l0, l1);
  const double e0 = std::exp(l0 - m);
  const double e1 = std::exp(l1 - m);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

double voxel_energy(double l0, double l1, double temperature) {
  const double a = l0 / temperature;
  const double b = l1 / temperature;
  const double m = std::max(a, b);
  return -temperature * (m + std::log1p(std::exp(std::min(a, b) - m)));
}

double voxel_score(double l0, double l1, const ScoreConfig& cfg) {
  switch (cfg.method) {
    case ScoreMethod::MaxSoftmax: {
      const auto p = voxel_softmax(l0, l1);
      return std::max(p[0], p[1]);
    }
    case ScoreMethod::MaxLogit:
      return std::max(l0, l1);
    case ScoreMethod::Energy:
      return voxel_energy(l0, l1, cfg.temperature);
    case ScoreMethod::Entropy: {
      const auto p = voxel_softmax(l0, l1);
      double h = 0.0;
      for (double q : p) {
        if (q > 0.0) h -= q * std::log(q);
      }
      return h + 0.0;
    }
  }
  throw InvariantError("voxel_score: unhandled method");
}

OodScore scan_score(const std::string& scan_id, const LogitVolume& logits, const MaskVolume& mask,
                    const ScoreConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw ConfigError("score temperature must be > 0");
  if (logits.dims() != mask.dims()) throw DataError("scan_score: logits and mask dims differ");
  const std::size_t n = voxel_count(mask.dims());

  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.data()[i]) voxels.push_back(i);
  }
  OodScore out{scan_id, std::string(method_name(cfg.method)), 0.0, false};
  if (voxels.empty()) {
    out.fallback_used = true;
    voxels.resize(n);
    std::iota(voxels.begin(), voxels.end(), std::size_t{0});
    const std::size_t k = std::min<std::size_t>(kFallbackVoxels, n);
    std::partial_sort(voxels.begin(), voxels.begin() + static_cast<std::ptrdiff_t>(k), voxels.end(),
                      [&](std::size_t a, std::size_t b) {
                        const float ta = logits.tumor(a), tb = logits.tumor(b);
                        return ta != tb ? ta > tb : a < b;
                      });
    voxels.resize(k);
    std::sort(voxels.begin(), voxels.end());
  }

  CompensatedSum sum;
  for (std::size_t v : voxels) sum.add(voxel_score(logits.background(v), logits.tumor(v), cfg));
  const double mean = sum.value() / static_cast<double>(voxels.size());

  switch (cfg.method) {
    case ScoreMethod::MaxSoftmax: out.value = 1.0 - mean; break;
    case ScoreMethod::MaxLogit: out.value = -mean; break;
    case ScoreMethod::Energy:
    case ScoreMethod::Entropy: out.value = mean; break;
  }
  if (!std::isfinite(out.value)) throw InvariantError("scan_score produced a non-finite value");
  return out;
}

}  // namespace rfdeep
