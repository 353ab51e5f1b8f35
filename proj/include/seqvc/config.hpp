// seqvc/config.hpp
//
// Flat key = value configuration with [sections], environment overrides
// (SEQVC_<SECTION>_<KEY>), and typed binding to the model, loss, training,
// corpus, and inference settings.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQVC_CONFIG_HPP_
#define SEQVC_CONFIG_HPP_

#include <cstdlib>
#include <map>

#include "seqvc/corpus.hpp"
#include "seqvc/inference.hpp"

namespace seqvc {

class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(std::istream &is) {
    ConfigFile cf;
    std::string line, section = "global";
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[' && trimmed.back() == ']') {
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      const auto key = trim(trimmed.substr(0, eq));
      const auto value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      cf.set(section, key, value);
    }
    return cf;
  }

  static ConfigFile load(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    return parse(f);
  }

  void set(const std::string &section, const std::string &key, const std::string &value) {
    values_[section + "." + key] = value;
  }

  bool has(const std::string &section, const std::string &key) const {
    return values_.count(section + "." + key) > 0;
  }

  std::string get_string(const std::string &section, const std::string &key,
                         const std::string &fallback) const {
    auto it = values_.find(section + "." + key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_number(const std::string &section, const std::string &key, double fallback) const {
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception &) {
      throw ConfigError(section + "." + key + ": not a number: '" + it->second + "'");
    }
    if (used != it->second.size())
      throw ConfigError(section + "." + key + ": not a number: '" + it->second + "'");
    return v;
  }

  long get_int(const std::string &section, const std::string &key, long fallback) const {
    const double v = get_number(section, key, static_cast<double>(fallback));
    const long r = static_cast<long>(v);
    if (static_cast<double>(r) != v)
      throw ConfigError(section + "." + key + ": expected an integer");
    return r;
  }

  bool get_bool(const std::string &section, const std::string &key, bool fallback) const {
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw ConfigError(section + "." + key + ": expected a boolean, got '" + it->second + "'");
  }

  // SEQVC_<SECTION>_<KEY>=value, uppercase; the first underscore separates
  // section and key.
  void apply_environment(char **envp) {
    if (envp == nullptr) return;
    for (char **e = envp; *e != nullptr; ++e) {
      std::string entry(*e);
      if (entry.rfind("SEQVC_", 0) != 0) continue;
      const auto eq = entry.find('=');
      if (eq == std::string::npos) continue;
      std::string name = entry.substr(6, eq - 6);
      const std::string value = entry.substr(eq + 1);
      const auto us = name.find('_');
      if (us == std::string::npos) continue;
      std::string section = name.substr(0, us);
      std::string key = name.substr(us + 1);
      for (auto &c : section) c = static_cast<char>(std::tolower(c));
      for (auto &c : key) c = static_cast<char>(std::tolower(c));
      set(section, key, value);
    }
  }

  void serialize(std::ostream &os) const {
    std::string current;
    for (const auto &[path, value] : values_) {
      const auto dot = path.find('.');
      const std::string section = path.substr(0, dot);
      if (section != current) {
        os << "[" << section << "]\n";
        current = section;
      }
      os << path.substr(dot + 1) << " = " << value << "\n";
    }
  }

  void save(const std::string &path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write config " + path);
    serialize(f);
    if (!f) throw IoError("short write to " + path);
  }

 private:
  static std::string trim(const std::string &s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, std::string> values_;  // "section.key" -> value
};

// ---------------------------------------------------------------------------
// Typed binding

inline NormMode norm_mode_from_name(const std::string &s) {
  if (s == "batch") return NormMode::kBatch;
  if (s == "cond-batch") return NormMode::kCondBatch;
  if (s == "instance") return NormMode::kInstance;
  if (s == "cond-instance") return NormMode::kCondInstance;
  if (s == "off") return NormMode::kOff;
  throw ConfigError("unknown norm mode '" + s + "'");
}

inline const char *norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::kBatch: return "batch";
    case NormMode::kCondBatch: return "cond-batch";
    case NormMode::kInstance: return "instance";
    case NormMode::kCondInstance: return "cond-instance";
    case NormMode::kOff: return "off";
  }
  return "?";
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec corpus;
  ConvertOptions inference;
  OutputRoute route = OutputRoute::kAuto;
  double train_fraction = 0.8;
  std::string manifest_path, checkpoint_dir, output_dir;

  // num_speakers stays unresolved until a manifest is seen
  static RunConfig from_file(const ConfigFile &cf) {
    RunConfig rc;
    rc.model.mode = mode_from_name(cf.get_string("model", "mode", "pairwise"));
    rc.model.num_mcc = static_cast<int>(cf.get_int("model", "num_mcc", 28));
    rc.model.reduction = static_cast<int>(cf.get_int("model", "reduction", 3));
    rc.model.frame_period_ms = cf.get_number("model", "frame_period_ms", 8.0);
    const bool multi = rc.model.mode != ModelMode::kPairwise;
    rc.model.hidden = static_cast<int>(cf.get_int("model", "hidden", multi ? 96 : 64));
    rc.model.embed_dim = static_cast<int>(cf.get_int("model", "embed_dim", 32));
    rc.model.norm =
        norm_mode_from_name(cf.get_string("model", "norm", multi ? "cond-batch" : "batch"));
    rc.model.dropout_ratio = static_cast<real>(cf.get_number("model", "dropout", 0.1));
    rc.model.groups = static_cast<int>(cf.get_int("model", "groups", 3));
    rc.model.blocks_per_group = static_cast<int>(cf.get_int("model", "blocks_per_group", 4));
    rc.model.kernel_regular = static_cast<int>(cf.get_int("model", "kernel_regular", 5));
    rc.model.kernel_causal = static_cast<int>(cf.get_int("model", "kernel_causal", 3));

    rc.train.batch_size = static_cast<int>(cf.get_int("train", "batch_size", 16));
    rc.train.iterations = cf.get_int("train", "iterations", 2000);
    rc.train.learning_rate = static_cast<real>(cf.get_number("train", "learning_rate", 1.5e-4));
    rc.train.beta1 = static_cast<real>(cf.get_number("train", "beta1", 0.9));
    rc.train.beta2 = static_cast<real>(cf.get_number("train", "beta2", 0.999));
    rc.train.grad_clip = static_cast<real>(cf.get_number("train", "grad_clip", 5.0));
    rc.train.seed = static_cast<std::uint64_t>(cf.get_int("train", "seed", 1));
    rc.train.checkpoint_every = cf.get_int("train", "checkpoint_every", 500);
    rc.train.bucket_tolerance = cf.get_number("train", "bucket_tolerance", 0.25);
    rc.train.src_speaker = cf.get_string("train", "src_speaker", "");
    rc.train.trg_speaker = cf.get_string("train", "trg_speaker", "");
    rc.train.weights.lambda_r = static_cast<real>(cf.get_number("loss", "lambda_r", 1));
    rc.train.weights.lambda_d = static_cast<real>(cf.get_number("loss", "lambda_d", 2000));
    rc.train.weights.lambda_o = static_cast<real>(cf.get_number("loss", "lambda_o", 2000));
    rc.train.weights.lambda_i = static_cast<real>(cf.get_number("loss", "lambda_i", 1));
    rc.train.weights.nu = static_cast<real>(cf.get_number("loss", "nu", 0.3));
    rc.train.weights.rho = static_cast<real>(cf.get_number("loss", "rho", 0.3));

    rc.corpus.num_speakers = static_cast<int>(cf.get_int("corpus", "num_speakers", 3));
    rc.corpus.sentences = static_cast<int>(cf.get_int("corpus", "sentences", 16));
    rc.corpus.min_frames = static_cast<int>(cf.get_int("corpus", "min_frames", 50));
    rc.corpus.max_frames = static_cast<int>(cf.get_int("corpus", "max_frames", 90));
    rc.corpus.latent_dim = static_cast<int>(cf.get_int("corpus", "latent_dim", 8));
    rc.corpus.num_mcc = rc.model.num_mcc;
    rc.corpus.tempo_min = cf.get_number("corpus", "tempo_min", 0.9);
    rc.corpus.tempo_max = cf.get_number("corpus", "tempo_max", 1.1);
    rc.corpus.speaker_strength = cf.get_number("corpus", "speaker_strength", 1.0);
    rc.corpus.noise = cf.get_number("corpus", "noise", 0.05);
    rc.corpus.frame_period_ms = rc.model.frame_period_ms;
    rc.corpus.seed = static_cast<std::uint64_t>(cf.get_int("corpus", "seed", 1));
    rc.train_fraction = cf.get_number("corpus", "train_fraction", 0.8);

    rc.inference.forward_attention = cf.get_bool("inference", "forward_attention", false);
    rc.inference.max_steps = static_cast<int>(cf.get_int("inference", "max_steps", 0));
    rc.inference.stop_patience = static_cast<int>(cf.get_int("inference", "stop_patience", 5));
    rc.inference.fa = ForwardAttentionConfig(rc.model.reduced_period_ms());
    const auto route = cf.get_string("inference", "output", "auto");
    if (route == "auto")
      rc.route = OutputRoute::kAuto;
    else if (route == "rec")
      rc.route = OutputRoute::kReconstructor;
    else if (route == "dec")
      rc.route = OutputRoute::kDecoder;
    else
      throw ConfigError("inference.output must be auto, rec, or dec");

    rc.manifest_path = cf.get_string("paths", "manifest", "");
    rc.checkpoint_dir = cf.get_string("paths", "checkpoint_dir", "");
    rc.output_dir = cf.get_string("paths", "output_dir", "");
    return rc;
  }
};

}  // namespace seqvc

#endif  // SEQVC_CONFIG_HPP_
