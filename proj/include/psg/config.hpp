// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_CONFIG_HPP_
#define PSG_CONFIG_HPP_

// Run configuration. The document is INI-style:
//
//   # comment
//   [section]
//   key = value
//
// Lists are comma separated ("128, 128"); class partitions are groups of
// classes separated by ';' ("0 1; 2 3"). Unknown sections and keys are
// rejected.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "psg/continual.hpp"
#include "psg/distill.hpp"
#include "psg/error.hpp"
#include "psg/eval.hpp"
#include "psg/generator.hpp"
#include "psg/network.hpp"

namespace psg {

enum class DataFormat { kIdx, kCsv };

struct DataConfig {
  DataFormat format = DataFormat::kIdx;
  std::string train_images, train_labels;  // idx
  std::string test_images, test_labels;    // idx
  std::string train_csv, test_csv;         // csv
  std::vector<int> classes;                // empty: keep all
  std::size_t limit_per_class = 0;         // 0: no limit
  bool downsample = false;
  bool normalize = true;
};

struct RunConfig {
  DataConfig data;
  std::string output_dir;
  uint64_t seed = 0;
  DistillConfig distill;
  GeneratorConfig generator;
  EvalConfig eval;
  std::vector<ArchTag> eval_archs = {ArchTag::kConvNet};
  StagePlan continual;

  nlohmann::json to_json() const;
};

namespace internal {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, "expected a boolean, got '" + v + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.empty() && v[0] == '-') {
        throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
      }
    }
    try {
      return boost::lexical_cast<T>(v);
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigError(key, "cannot parse '" + v + "'");
    }
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (const auto& item : split(raw, ',')) out.push_back(parse_value<T>(key, item));
  return out;
}

inline std::vector<std::vector<int>> parse_partitions(const std::string& key,
                                                      const std::string& raw) {
  std::vector<std::vector<int>> out;
  for (const auto& group : split(raw, ';')) {
    std::vector<int> part;
    std::stringstream ss(group);
    std::string tok;
    while (ss >> tok) {
      for (const auto& t : split(tok, ',')) part.push_back(parse_value<int>(key, t));
    }
    if (!part.empty()) out.push_back(std::move(part));
  }
  return out;
}

// Tracks which keys of a parsed document were consumed.
class KeyReader {
 public:
  explicit KeyReader(const boost::property_tree::ptree& doc) {
    for (const auto& [section, body] : doc) {
      if (body.empty()) {
        throw ConfigError(section, "keys must live inside a [section]");
      }
      for (const auto& [key, value] : body) {
        values_[section + "." + key] = value.get_value<std::string>();
      }
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    known_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (auto r = raw(key)) out = parse_value<T>(key, *r);
  }
  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (auto r = raw(key)) out = parse_value<T>(key, *r);
  }
  template <typename T>
  void read_list(const std::string& key, std::vector<T>& out) {
    if (auto r = raw(key)) out = parse_list<T>(key, *r);
  }
  void read_arch(const std::string& key, ArchTag& out) {
    if (auto r = raw(key)) {
      try {
        out = parse_arch(trim(*r));
      } catch (const InvalidArgument& e) {
        throw ConfigError(key, e.what());
      }
      if (out == ArchTag::kGenerator) {
        throw ConfigError(key, "generator is not a classifier architecture");
      }
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : values_) {
      if (!known_.count(key)) throw ConfigError(key, "unknown key");
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> known_;
};

}  // namespace internal

inline constexpr double kDefaultEpsilon = 10.0;

// Parses and normalizes a configuration document: fills defaults, checks
// cross-field constraints. Every error names the offending key.
inline RunConfig validate_config(const std::string& text) {
  boost::property_tree::ptree doc;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, doc);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  internal::KeyReader r(doc);
  RunConfig c;

  if (auto f = r.raw("data.format")) {
    const std::string v = internal::trim(*f);
    if (v == "idx") c.data.format = DataFormat::kIdx;
    else if (v == "csv") c.data.format = DataFormat::kCsv;
    else throw ConfigError("data.format", "expected idx or csv, got '" + v + "'");
  }
  r.read("data.train_images", c.data.train_images);
  r.read("data.train_labels", c.data.train_labels);
  r.read("data.test_images", c.data.test_images);
  r.read("data.test_labels", c.data.test_labels);
  r.read("data.train_csv", c.data.train_csv);
  r.read("data.test_csv", c.data.test_csv);
  r.read_list("data.classes", c.data.classes);
  r.read("data.limit_per_class", c.data.limit_per_class);
  r.read("data.downsample", c.data.downsample);
  r.read("data.normalize", c.data.normalize);

  r.read("output.dir", c.output_dir);
  r.read("run.seed", c.seed);

  auto& d = c.distill;
  r.read("privacy.epsilon", d.privacy.epsilon_target);
  r.read("privacy.sigma", d.privacy.sigma);
  r.read("privacy.delta", d.privacy.delta);
  r.read("privacy.clip", d.privacy.clip);
  r.read("privacy.non_private", d.privacy.non_private);
  if (auto o = r.raw("privacy.orders")) d.orders = internal::parse_list<int>("privacy.orders", *o);

  r.read("distill.runs", d.runs);
  r.read("distill.spc", d.spc);
  std::optional<std::size_t> T, J;
  r.read("distill.outer_iters", T);
  r.read("distill.inner_iters", J);
  r.read("distill.batches_per_iter", d.batches_per_iter);
  r.read("distill.batch_size", d.batch_size);
  r.read("distill.lr_theta", d.lr_theta);
  r.read("distill.lr_synthetic", d.lr_synthetic);
  r.read("distill.momentum_theta", d.momentum_theta);
  r.read("distill.momentum_synthetic", d.momentum_synthetic);
  r.read_arch("distill.arch", d.arch);
  r.read("distill.width", d.width);
  r.read_list("distill.hidden", d.hidden);

  auto& g = c.generator;
  r.read("generator.latent_dim", g.latent_dim);
  r.read("generator.channels", g.channels);
  r.read_list("generator.hidden", g.hidden);
  r.read("generator.lr", g.adam.lr);
  r.read("generator.beta1", g.adam.beta1);
  r.read("generator.beta2", g.adam.beta2);
  r.read("generator.eps", g.adam.eps);

  auto& e = c.eval;
  if (auto a = r.raw("eval.archs")) {
    c.eval_archs.clear();
    for (const auto& name : internal::split(*a, ',')) {
      ArchTag tag;
      try {
        tag = parse_arch(name);
      } catch (const InvalidArgument& err) {
        throw ConfigError("eval.archs", err.what());
      }
      if (tag == ArchTag::kGenerator) {
        throw ConfigError("eval.archs", "generator is not a classifier");
      }
      c.eval_archs.push_back(tag);
    }
    if (c.eval_archs.empty()) throw ConfigError("eval.archs", "empty list");
  }
  r.read("eval.epochs", e.epochs);
  r.read("eval.lr", e.lr);
  r.read("eval.batch_size", e.batch_size);
  r.read("eval.momentum", e.momentum);
  r.read("eval.weight_decay", e.weight_decay);
  r.read("eval.augment", e.augment);
  r.read("eval.repeats", e.repeats);
  r.read("eval.width", e.width);
  r.read_list("eval.hidden", e.hidden);

  auto& p = c.continual;
  if (auto m = r.raw("continual.method")) {
    try {
      p.method = parse_continual_method(internal::trim(*m));
    } catch (const InvalidArgument& err) {
      throw ConfigError("continual.method", err.what());
    }
  }
  if (auto parts = r.raw("continual.partitions")) {
    p.partitions = internal::parse_partitions("continual.partitions", *parts);
  }
  r.read("continual.dpsgd_epochs", p.dpsgd_epochs);
  r.read("continual.dpsgd_lr", p.dpsgd_lr);
  r.read("continual.dpsgd_momentum", p.dpsgd_momentum);

  r.reject_unknown();

  // Cross-field rules.
  if (d.privacy.sigma && d.privacy.epsilon_target) {
    throw ConfigError("privacy.sigma, privacy.epsilon",
                      "set either a noise multiplier or a target epsilon, "
                      "not both");
  }
  if (d.privacy.non_private && (d.privacy.sigma || d.privacy.epsilon_target)) {
    throw ConfigError("privacy.non_private",
                      "non-private runs take no sigma or epsilon");
  }
  if (!d.privacy.non_private && !d.privacy.sigma && !d.privacy.epsilon_target) {
    d.privacy.epsilon_target = kDefaultEpsilon;
  }
  if (d.privacy.sigma && !(*d.privacy.sigma > 0)) {
    throw ConfigError("privacy.sigma", "must be > 0 (use non_private for no noise)");
  }
  if (d.privacy.epsilon_target && !(*d.privacy.epsilon_target > 0)) {
    throw ConfigError("privacy.epsilon", "must be > 0");
  }
  if (!(d.privacy.delta > 0 && d.privacy.delta < 1)) {
    throw ConfigError("privacy.delta", "must be in (0, 1)");
  }
  if (!(d.privacy.clip > 0)) throw ConfigError("privacy.clip", "must be > 0");
  if (d.spc < 1) throw ConfigError("distill.spc", "must be >= 1");
  const auto [dt, dj] = default_outer_inner(d.spc);
  d.outer_iters = T.value_or(dt);
  d.inner_iters = J.value_or(dj);
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError(key, "must be > 0");
  };
  auto at_least_one = [](const char* key, std::size_t v) {
    if (v < 1) throw ConfigError(key, "must be >= 1");
  };
  at_least_one("distill.runs", d.runs);
  at_least_one("distill.outer_iters", d.outer_iters);
  at_least_one("distill.batches_per_iter", d.batches_per_iter);
  at_least_one("distill.batch_size", d.batch_size);
  positive("distill.lr_theta", d.lr_theta);
  positive("distill.lr_synthetic", d.lr_synthetic);
  for (int o : d.orders) {
    if (o < 2) throw ConfigError("privacy.orders", "orders must be integers >= 2");
  }
  if (d.orders.empty()) throw ConfigError("privacy.orders", "empty list");
  at_least_one("generator.latent_dim", g.latent_dim);
  positive("generator.lr", g.adam.lr);
  at_least_one("eval.repeats", e.repeats);
  at_least_one("eval.batch_size", e.batch_size);
  positive("eval.lr", e.lr);
  positive("continual.dpsgd_lr", p.dpsgd_lr);

  d.seed = c.seed;
  e.seed = derive_seed(c.seed, "eval");
  e.width = r.has("eval.width") ? e.width : d.width;
  e.arch = c.eval_archs.front();
  p.distill = d;
  p.eval = e;
  p.seed = derive_seed(c.seed, "continual");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return validate_config(ss.str());
}

inline nlohmann::json RunConfig::to_json() const {
  auto opt = [](const auto& v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  nlohmann::json j;
  j["data"] = {{"format", data.format == DataFormat::kIdx ? "idx" : "csv"},
               {"train_images", data.train_images},
               {"train_labels", data.train_labels},
               {"test_images", data.test_images},
               {"test_labels", data.test_labels},
               {"train_csv", data.train_csv},
               {"test_csv", data.test_csv},
               {"classes", data.classes},
               {"limit_per_class", data.limit_per_class},
               {"downsample", data.downsample},
               {"normalize", data.normalize}};
  j["output"] = {{"dir", output_dir}};
  j["run"] = {{"seed", seed}};
  j["privacy"] = {{"epsilon", opt(distill.privacy.epsilon_target)},
                  {"sigma", opt(distill.privacy.sigma)},
                  {"delta", distill.privacy.delta},
                  {"clip", distill.privacy.clip},
                  {"non_private", distill.privacy.non_private},
                  {"orders", distill.orders}};
  j["distill"] = {{"runs", distill.runs},
                  {"spc", distill.spc},
                  {"outer_iters", distill.outer_iters},
                  {"inner_iters", distill.inner_iters},
                  {"batches_per_iter", distill.batches_per_iter},
                  {"batch_size", distill.batch_size},
                  {"lr_theta", distill.lr_theta},
                  {"lr_synthetic", distill.lr_synthetic},
                  {"momentum_theta", distill.momentum_theta},
                  {"momentum_synthetic", distill.momentum_synthetic},
                  {"arch", arch_name(distill.arch)},
                  {"width", distill.width},
                  {"hidden", distill.hidden}};
  j["generator"] = {{"latent_dim", generator.latent_dim},
                    {"channels", generator.channels},
                    {"hidden", generator.hidden},
                    {"lr", generator.adam.lr},
                    {"beta1", generator.adam.beta1},
                    {"beta2", generator.adam.beta2},
                    {"eps", generator.adam.eps}};
  std::vector<std::string> archs;
  for (ArchTag a : eval_archs) archs.push_back(arch_name(a));
  j["eval"] = {{"archs", archs},
               {"epochs", eval.epochs},
               {"lr", eval.lr},
               {"batch_size", eval.batch_size},
               {"momentum", eval.momentum},
               {"weight_decay", eval.weight_decay},
               {"augment", opt(eval.augment)},
               {"repeats", eval.repeats},
               {"width", eval.width},
               {"hidden", eval.hidden}};
  j["continual"] = {{"method", continual_method_name(continual.method)},
                    {"partitions", continual.partitions},
                    {"dpsgd_epochs", continual.dpsgd_epochs},
                    {"dpsgd_lr", continual.dpsgd_lr},
                    {"dpsgd_momentum", continual.dpsgd_momentum}};
  return j;
}

}  // namespace psg

#endif  // PSG_CONFIG_HPP_
