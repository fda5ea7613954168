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

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gtl/data/episode.hpp"
#include "gtl/data/synth.hpp"
#include "gtl/error.hpp"
#include "gtl/io/bytes.hpp"
#include "gtl/training/trainer.hpp"

namespace gtl::cli {

/// Parsed "[section]" / "key = value" text. Keys outside any section live
/// in section "". '#' and ';' start comments.
struct IniFile {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

inline IniFile parse_ini(std::string_view text) {
  IniFile ini;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    ini.sections[section][key] = detail::trim(std::string_view(line).substr(eq + 1));
  }
  return ini;
}

struct EvalSettings {
  std::vector<Protocol> protocols{Protocol::all_way(), Protocol::n_way(5)};
  std::vector<std::size_t> shots{1, 5};
  std::vector<TrainMode> modes{TrainMode::full};
  std::size_t episodes = 10;
  std::size_t threads = 1;  // 0 = hardware concurrency
  bool dump_latents = false;
  std::vector<std::size_t> d_list{1, 2, 4, 8, 16, 32, 64, 128};
  std::size_t sweep_shots = 5;
};

struct GradcheckSettings {
  ModelDims dims{32, 8, 4, 16, 4, 3, 16};
  std::size_t batch = 6;
  std::size_t max_entries_per_param = 0;
  double tolerance = 1e-4;
  bool freeze_generator = false;
  bool corrupt = false;  // negative control: perturb one analytic gradient
};

struct Paths {
  std::string base;        // default <out>/base.gtlf
  std::string novel;       // default <out>/novel.gtlf
  std::string checkpoint;  // default <out>/phase1_<ablation>.gtlp
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  SynthConfig synth;
  TrainConfig train;
  EvalSettings eval;
  GradcheckSettings gradcheck;
  Paths paths;

  std::string base_path() const { return paths.base.empty() ? out + "/base.gtlf" : paths.base; }
  std::string novel_path() const { return paths.novel.empty() ? out + "/novel.gtlf" : paths.novel; }
  std::string checkpoint_path(Ablation a) const {
    return paths.checkpoint.empty() ? out + "/phase1_" + to_string(a) + ".gtlp" : paths.checkpoint;
  }
};

namespace detail {

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value,
                                   const std::string& want) {
  throw ValidationError("config " + key + " = '" + value + "': expected " + want);
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item =
        trim(std::string_view(v).substr(start, comma == std::string::npos ? v.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F parse) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse(key, item));
  if (out.empty()) bad_value(key, v, "a non-empty comma-separated list");
  return out;
}

}  // namespace detail

/// Applies one "section.key" setting. Unknown keys are errors so typos do
/// not silently fall back to defaults.
inline void apply_setting(RunConfig& c, const std::string& section, const std::string& key,
                          const std::string& v) {
  using namespace detail;
  const std::string k = section.empty() ? key : section + "." + key;
  auto& s = c.synth;
  auto& t = c.train;
  auto& e = c.eval;
  auto& g = c.gradcheck;

  if (k == "run.seed" || k == "seed") c.seed = to_u64(k, v);
  else if (k == "run.out" || k == "out") c.out = v;
  else if (k == "paths.base") c.paths.base = v;
  else if (k == "paths.novel") c.paths.novel = v;
  else if (k == "paths.checkpoint") c.paths.checkpoint = v;

  else if (k == "synth.classes") s.classes = to_size(k, v);
  else if (k == "synth.base_classes") s.base_classes = to_size(k, v);
  else if (k == "synth.modalities") s.modalities = to_size(k, v);
  else if (k == "synth.samples_per_class_modality") s.samples_per_class_modality = to_size(k, v);
  else if (k == "synth.nc") s.nc = to_size(k, v);
  else if (k == "synth.nm") s.nm = to_size(k, v);
  else if (k == "synth.dx") s.dx = to_size(k, v);
  else if (k == "synth.separation") s.separation = to_double(k, v);
  else if (k == "synth.modality_offset") s.modality_offset = to_double(k, v);
  else if (k == "synth.mixing_depth") s.mixing_depth = to_size(k, v);

  else if (k == "train.epochs") t.epochs = to_size(k, v);
  else if (k == "train.lr_repr") t.lr_repr = to_double(k, v);
  else if (k == "train.lr_cls") t.lr_cls = to_double(k, v);
  else if (k == "train.decay_after_epoch") t.decay_after_epoch = to_size(k, v);
  else if (k == "train.decay_factor") t.decay_factor = to_double(k, v);
  else if (k == "train.weight_decay") t.weight_decay = to_double(k, v);
  else if (k == "train.lambda") t.lambda = to_double(k, v);
  else if (k == "train.batch_size") t.batch_size = to_size(k, v);
  else if (k == "train.dropout") t.dropout = to_double(k, v);
  else if (k == "train.mode") t.mode = parse_train_mode(v);

  else if (k == "model.dx") t.dims.dx = to_size(k, v);
  else if (k == "model.nc") t.dims.nc = to_size(k, v);
  else if (k == "model.nm") t.dims.nm = to_size(k, v);
  else if (k == "model.hidden") t.dims.hidden = to_size(k, v);
  else if (k == "model.domains") t.dims.domains = to_size(k, v);
  else if (k == "model.classifier_hidden") t.dims.classifier_hidden = to_size(k, v);

  else if (k == "eval.protocols")
    e.protocols = to_list<Protocol>(k, v, [](auto&, auto& x) { return parse_protocol(x); });
  else if (k == "eval.shots") e.shots = to_list<std::size_t>(k, v, to_size);
  else if (k == "eval.modes")
    e.modes = to_list<TrainMode>(k, v, [](auto&, auto& x) { return parse_train_mode(x); });
  else if (k == "eval.episodes") e.episodes = to_size(k, v);
  else if (k == "eval.threads") e.threads = to_size(k, v);
  else if (k == "eval.dump_latents") e.dump_latents = to_bool(k, v);
  else if (k == "eval.d_list") e.d_list = to_list<std::size_t>(k, v, to_size);
  else if (k == "eval.sweep_shots") e.sweep_shots = to_size(k, v);

  else if (k == "gradcheck.dx") g.dims.dx = to_size(k, v);
  else if (k == "gradcheck.nc") g.dims.nc = to_size(k, v);
  else if (k == "gradcheck.nm") g.dims.nm = to_size(k, v);
  else if (k == "gradcheck.hidden") g.dims.hidden = to_size(k, v);
  else if (k == "gradcheck.domains") g.dims.domains = to_size(k, v);
  else if (k == "gradcheck.classes") g.dims.classes = to_size(k, v);
  else if (k == "gradcheck.classifier_hidden") g.dims.classifier_hidden = to_size(k, v);
  else if (k == "gradcheck.batch") g.batch = to_size(k, v);
  else if (k == "gradcheck.max_entries_per_param") g.max_entries_per_param = to_size(k, v);
  else if (k == "gradcheck.tolerance") g.tolerance = to_double(k, v);
  else if (k == "gradcheck.freeze_generator") g.freeze_generator = to_bool(k, v);
  else if (k == "gradcheck.corrupt") g.corrupt = to_bool(k, v);

  else throw ValidationError("unknown config key '" + k + "'");
}

inline void apply_ini(RunConfig& c, const IniFile& ini) {
  for (const auto& [section, entries] : ini.sections)
    for (const auto& [key, value] : entries) apply_setting(c, section, key, value);
}

/// "section.key=value", as given to --set.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override '" + assignment + "': expected section.key=value");
  }
  const std::string path = detail::trim(std::string_view(assignment).substr(0, eq));
  const auto dot = path.find('.');
  const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
  if (dot == std::string::npos) apply_setting(c, "", path, value);
  else apply_setting(c, path.substr(0, dot), path.substr(dot + 1), value);
}

/// Copies the run seed into the component configs and checks everything.
inline void finalize(RunConfig& c) {
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.synth.validate();
  c.train.validate();
  if (c.eval.episodes == 0) throw ValidationError("eval.episodes must be positive");
  for (auto k : c.eval.shots)
    if (k == 0) throw ValidationError("eval.shots entries must be positive");
  if (c.eval.sweep_shots == 0) throw ValidationError("eval.sweep_shots must be positive");
  for (auto d : c.eval.d_list)
    if (d == 0) throw ValidationError("eval.d_list entries must be positive");
  if (c.gradcheck.batch < 2) throw ValidationError("gradcheck.batch must be at least 2");
  c.gradcheck.dims.validate();
}

/// defaults < file < overrides
inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!config_path.empty()) apply_ini(c, parse_ini(io::read_file(config_path)));
  for (const auto& o : overrides) apply_override(c, o);
  return c;
}

}  // namespace gtl::cli
