/* Copyright 2026 The GTL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gtl/data/dataset.hpp"
#include "gtl/data/features.hpp"
#include "gtl/error.hpp"
#include "gtl/numerics/matrix.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

/// Parameters of the synthetic generative process
///   z_c* ~ N(μ_y, I),  z_m* ~ N(ν_m, I),  x = g*([z_c*, z_m*])
/// where μ_y ~ N(0, separation²·I), ν_m ~ N(0, modality_offset²·I) and g* is
/// a fixed random tanh network.
struct SynthConfig {
  std::size_t classes = 30;
  std::size_t base_classes = 20;  // the first base_classes labels; the rest are novel
  std::size_t modalities = 2;     // novel modalities; base uses modality 0 only
  std::size_t samples_per_class_modality = 20;
  std::size_t nc = 8;
  std::size_t nm = 4;
  std::size_t dx = 32;
  double separation = 5.0;
  double modality_offset = 3.0;
  std::size_t mixing_depth = 2;  // dense layers in g*, tanh between them
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ValidationError(std::string("SynthConfig: ") + what + " must be positive");
    };
    positive(classes, "classes");
    positive(modalities, "modalities");
    positive(samples_per_class_modality, "samples_per_class_modality");
    positive(nc, "nc");
    positive(nm, "nm");
    positive(dx, "dx");
    positive(mixing_depth, "mixing_depth");
    if (base_classes == 0 || base_classes >= classes) {
      throw ValidationError("SynthConfig: base_classes must be in [1, classes)");
    }
    if (modalities > 256) throw ValidationError("SynthConfig: at most 256 modalities");
    if (!(separation >= 0.0) || !(modality_offset >= 0.0)) {
      throw ValidationError("SynthConfig: scales must be non-negative");
    }
  }
};

/// The mixing network g*: dense layers with tanh after every layer but the last.
struct MixingNetwork {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  Matrix apply(const Matrix& z) const {
    Matrix h = z;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix next = matmul(h, weights[l]);
      for (std::size_t i = 0; i < next.rows(); ++i)
        for (std::size_t j = 0; j < next.cols(); ++j) {
          next(i, j) += biases[l][j];
          if (l + 1 < weights.size()) next(i, j) = std::tanh(next(i, j));
        }
      h = std::move(next);
    }
    return h;
  }
};

struct SyntheticData {
  DatasetSplit split;
  /// Ground-truth [z_c*, z_m*] per record, same ids/labels/modalities as the
  /// feature records.
  std::vector<FeatureRecord> base_latents;
  std::vector<FeatureRecord> novel_latents;
  Matrix class_means;      // classes × nc
  Matrix modality_means;   // modalities × nm
  MixingNetwork mixing;
};

inline SyntheticData synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticData out;

  out.class_means = Matrix(cfg.classes, cfg.nc);
  for (double& v : out.class_means.values()) v = cfg.separation * rng.normal();
  out.modality_means = Matrix(cfg.modalities, cfg.nm);
  for (double& v : out.modality_means.values()) v = cfg.modality_offset * rng.normal();

  // widths: (nc+nm) → 4·dx → ... → dx
  const std::size_t in = cfg.nc + cfg.nm;
  for (std::size_t l = 0; l < cfg.mixing_depth; ++l) {
    const std::size_t fan_in = l == 0 ? in : 4 * cfg.dx;
    const std::size_t fan_out = l + 1 == cfg.mixing_depth ? cfg.dx : 4 * cfg.dx;
    Matrix w(fan_in, fan_out), b(1, fan_out);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.values()) v = sd * rng.normal();
    for (double& v : b.values()) v = 0.1 * rng.normal();
    out.mixing.weights.push_back(std::move(w));
    out.mixing.biases.push_back(std::move(b));
  }

  std::uint64_t next_id = 0;
  auto emit = [&](std::uint32_t label, std::uint8_t modality, std::vector<FeatureRecord>& feats,
                  std::vector<FeatureRecord>& lats) {
    Matrix z(cfg.samples_per_class_modality, in);
    for (std::size_t s = 0; s < z.rows(); ++s) {
      for (std::size_t j = 0; j < cfg.nc; ++j) z(s, j) = out.class_means(label, j) + rng.normal();
      for (std::size_t j = 0; j < cfg.nm; ++j)
        z(s, cfg.nc + j) = out.modality_means(modality, j) + rng.normal();
    }
    const Matrix x = out.mixing.apply(z);
    for (std::size_t s = 0; s < z.rows(); ++s) {
      FeatureRecord f{next_id, {}, label, modality};
      FeatureRecord t{next_id, {}, label, modality};
      ++next_id;
      for (double v : x.row(s)) f.feature.push_back(static_cast<float>(v));
      for (double v : z.row(s)) t.feature.push_back(static_cast<float>(v));
      feats.push_back(std::move(f));
      lats.push_back(std::move(t));
    }
  };

  std::vector<FeatureRecord> base, novel;
  for (std::size_t c = 0; c < cfg.base_classes; ++c)
    emit(static_cast<std::uint32_t>(c), 0, base, out.base_latents);
  for (std::size_t c = cfg.base_classes; c < cfg.classes; ++c)
    for (std::size_t m = 0; m < cfg.modalities; ++m)
      emit(static_cast<std::uint32_t>(c), static_cast<std::uint8_t>(m), novel, out.novel_latents);
  out.split = make_split(std::move(base), std::move(novel));
  return out;
}

}  // namespace gtl
