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

// GTLP checkpoint layout, all integers little-endian:
//
//   "GTLP"            4 bytes
//   version           u32 (= 1)
//   dims              u32 × 7: dx, nc, nm, hidden, domains, classes,
//                     classifier_hidden
//   ablation          u8 (0 full, 1 no_z, 2 no_zm)
//   group count       u32
//   per group:
//     name            u16 length + bytes
//     frozen          u8
//     tensor count    u32
//     per tensor:
//       name          u16 length + bytes
//       rank          u8
//       dims          u32 × rank
//       values        f64 × prod(dims)
//
// Groups are written in the order encoder, disturbance, aggregator,
// generator, classifier, followed by a "buffers" group holding batch-norm
// running statistics and the dataset label of each classifier output.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "gtl/error.hpp"
#include "gtl/io/bytes.hpp"
#include "gtl/model/gtl_model.hpp"

namespace gtl {

inline constexpr std::string_view kCheckpointMagic = "GTLP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensor(io::ByteWriter& w, const std::string& name, const Matrix& m) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u8(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) w.f64(v);
}

inline void write_group(io::ByteWriter& w, const ParamGroup& g) {
  w.u16(static_cast<std::uint16_t>(g.name.size()));
  w.bytes(g.name);
  w.u8(g.frozen ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(g.params.size()));
  for (const auto& p : g.params) write_tensor(w, p.name, p.value);
}

inline ParamGroup buffers_group(const GtlParams& p) {
  ParamGroup b("buffers");
  b.add("encoder_bn.running_mean", p.encoder_bn.running_mean);
  b.add("encoder_bn.running_var", p.encoder_bn.running_var);
  b.add("generator_bn.running_mean", p.generator_bn.running_mean);
  b.add("generator_bn.running_var", p.generator_bn.running_var);
  Matrix labels(1, p.class_labels.size());
  for (std::size_t i = 0; i < p.class_labels.size(); ++i) labels[i] = p.class_labels[i];
  b.add("classifier.labels", std::move(labels));
  return b;
}

inline ParamGroup read_group(io::ByteReader& r) {
  const auto name_len = r.u16("group name length");
  ParamGroup g(std::string(r.bytes(name_len, "group name")));
  g.frozen = r.u8("frozen flag") != 0;
  const auto count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto tlen = r.u16("tensor name length");
    std::string tname(r.bytes(tlen, "tensor name"));
    const std::size_t rank_at = r.offset();
    const auto rank = r.u8("tensor rank");
    if (rank == 0 || rank > 2) {
      throw FormatError("tensor '" + tname + "' has unsupported rank " + std::to_string(rank),
                        rank_at);
    }
    std::size_t rows = 1, cols = r.u32("tensor dim");
    if (rank == 2) {
      rows = cols;
      cols = r.u32("tensor dim");
    }
    if (rows != 0 && cols > r.remaining() / 8 / rows) {
      throw FormatError("tensor '" + tname + "' extends past end of file", r.offset());
    }
    Matrix m(rows, cols);
    for (double& v : m.values()) v = r.f64("tensor values");
    g.add(std::move(tname), std::move(m));
  }
  return g;
}

/// Replaces `dst`'s values with the same-named tensors in `src`, checking
/// names and shapes.
inline void assign_group(ParamGroup& dst, const ParamGroup& src, std::size_t offset) {
  if (dst.params.size() != src.params.size()) {
    throw FormatError("group '" + dst.name + "' has " + std::to_string(src.params.size()) +
                          " tensors, expected " + std::to_string(dst.params.size()),
                      offset);
  }
  for (std::size_t i = 0; i < dst.params.size(); ++i) {
    const auto& s = src.params[i];
    auto& d = dst.params[i];
    if (s.name != d.name || !s.value.same_shape(d.value)) {
      throw FormatError("tensor '" + dst.name + "/" + s.name + "' " + s.value.shape() +
                            " does not match expected '" + d.name + "' " + d.value.shape(),
                        offset);
    }
    d.value = s.value;
    d.grad = Matrix(s.value.rows(), s.value.cols());
  }
  dst.frozen = src.frozen;
}

}  // namespace detail

inline std::string encode_checkpoint(const GtlParams& p) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto& d = p.dims;
  for (std::size_t v : {d.dx, d.nc, d.nm, d.hidden, d.domains, d.classes, d.classifier_hidden})
    w.u32(static_cast<std::uint32_t>(v));
  w.u8(static_cast<std::uint8_t>(p.ablation));
  const auto groups = p.groups();
  w.u32(static_cast<std::uint32_t>(groups.size() + 1));
  for (const ParamGroup* g : groups) detail::write_group(w, *g);
  detail::write_group(w, detail::buffers_group(p));
  return w.take();
}

inline GtlParams decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  ModelDims dims;
  dims.dx = r.u32("dims.dx");
  dims.nc = r.u32("dims.nc");
  dims.nm = r.u32("dims.nm");
  dims.hidden = r.u32("dims.hidden");
  dims.domains = r.u32("dims.domains");
  dims.classes = r.u32("dims.classes");
  dims.classifier_hidden = r.u32("dims.classifier_hidden");
  const std::size_t ablation_at = r.offset();
  const auto ablation = r.u8("ablation");
  if (ablation > 2) throw FormatError("unknown ablation tag", ablation_at);
  try {
    dims.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what(), 8);
  }
  {
    const double dx = double(dims.dx), h = double(dims.hidden), l = double(dims.latent()),
                 dom = double(dims.domains), nm = double(dims.nm), ch = double(dims.classifier_hidden);
    const double cls_in = ablation == 1 ? dx : double(dims.nc);
    const double weights = dx * h + 2 * h * l + h * dom * (1 + nm) + 2 * nm * nm + l * h + h * dx +
                           cls_in * ch + ch * double(dims.classes);
    if (weights * 8.0 > double(r.remaining())) {
      throw FormatError("dims describe more weights than the file holds", 8);
    }
  }

  // Build a correctly-shaped skeleton, then overwrite it tensor by tensor.
  Rng skeleton_rng(0);
  GtlParams p = init_params(dims, static_cast<Ablation>(ablation), skeleton_rng);
  const std::size_t count_at = r.offset();
  const auto count = r.u32("group count");
  auto groups = p.groups();
  if (count != groups.size() + 1) {
    throw FormatError("expected " + std::to_string(groups.size() + 1) + " groups, found " +
                          std::to_string(count),
                      count_at);
  }
  for (ParamGroup* g : groups) {
    const std::size_t at = r.offset();
    ParamGroup loaded = detail::read_group(r);
    if (loaded.name != g->name) {
      throw FormatError("expected group '" + g->name + "', found '" + loaded.name + "'", at);
    }
    detail::assign_group(*g, loaded, at);
  }
  const std::size_t at = r.offset();
  ParamGroup buffers = detail::read_group(r);
  ParamGroup expected = detail::buffers_group(p);
  if (buffers.name != expected.name) throw FormatError("missing buffers group", at);
  detail::assign_group(expected, buffers, at);
  p.encoder_bn.running_mean = expected["encoder_bn.running_mean"].value;
  p.encoder_bn.running_var = expected["encoder_bn.running_var"].value;
  p.generator_bn.running_mean = expected["generator_bn.running_mean"].value;
  p.generator_bn.running_var = expected["generator_bn.running_var"].value;
  const Matrix& labels = expected["classifier.labels"].value;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] >= 0.0 && labels[i] <= 4294967295.0) || labels[i] != std::floor(labels[i])) {
      throw FormatError("classifier label is not a u32 value", at);
    }
    p.class_labels[i] = static_cast<std::uint32_t>(labels[i]);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return p;
}

inline void save_checkpoint(const std::string& path, const GtlParams& p) {
  io::write_file(path, encode_checkpoint(p));
}

inline GtlParams load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace gtl
