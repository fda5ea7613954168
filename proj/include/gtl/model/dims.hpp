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

#include <cstddef>
#include <cstdint>
#include <string>

#include "gtl/error.hpp"

namespace gtl {

/// Layer widths of the GTL network. Defaults are the full-size architecture.
struct ModelDims {
  std::size_t dx = 1280;       // input feature width
  std::size_t nc = 128;        // intrinsic concept z_c
  std::size_t nm = 64;         // in-modality disturbance z_m
  std::size_t hidden = 256;    // encoder / generator hidden width
  std::size_t domains = 128;   // latent-domain experts d
  std::size_t classes = 1;     // classifier outputs
  std::size_t classifier_hidden = 1280;

  std::size_t latent() const noexcept { return nc + nm; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ValidationError(std::string("ModelDims: ") + name + " must be positive");
    };
    positive(dx, "dx");
    positive(nc, "nc");
    positive(nm, "nm");
    positive(hidden, "hidden");
    positive(domains, "domains");
    positive(classes, "classes");
    positive(classifier_hidden, "classifier_hidden");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Which parts of the network participate.
///   full  - encoder, gated disturbance path, generator, classifier on z_c
///   no_z  - no latent variables; the classifier reads the raw features
///   no_zm - disturbance path disabled; the generator sees [z_c, 0]
enum class Ablation : std::uint8_t { full = 0, no_z = 1, no_zm = 2 };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_z: return "no_z";
    case Ablation::no_zm: return "no_zm";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_z") return Ablation::no_z;
  if (s == "no_zm") return Ablation::no_zm;
  throw ValidationError("unknown ablation '" + s + "' (expected full, no_z or no_zm)");
}

}  // namespace gtl
