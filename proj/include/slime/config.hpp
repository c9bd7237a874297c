/* Copyright 2026 The slime-kit Authors. All Rights Reserved.

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

// RunConfig: one JSON document with sections
//   {slicing, adapter, router, bilinear, training}
// Every key has a default; unknown sections or keys are rejected.

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "slime/bilinear.hpp"
#include "slime/pipeline.hpp"

namespace slime {

/// Raised for malformed or unknown configuration entries.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct BilinearConfig {
  std::size_t dim = bilinear::kDefaultDim;
  double eta = bilinear::kDefaultEta;
  long steps = bilinear::kDefaultSteps;
};

struct RunConfig {
  pipeline::TaskConfig task;
  pipeline::ModelConfig model;
  pipeline::TrainingConfig training;
  BilinearConfig bilinear;
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["slicing"] = {{"tile", c.task.tile},
                  {"token_grid", c.task.token_grid},
                  {"max_grid", c.task.max_grid},
                  {"min_tiles", c.task.min_tiles},
                  {"max_tiles", c.task.max_tiles}};
  j["adapter"] = {{"vision_dim", c.task.vision_dim},
                  {"llm_dim", c.model.llm_dim},
                  {"local_queries", c.model.local_queries},
                  {"gate_noise", c.model.gate_noise},
                  {"forced_gate", c.model.forced_gate ? nlohmann::json(*c.model.forced_gate)
                                                      : nlohmann::json()}};
  j["router"] = {{"gamma", c.model.gamma}, {"train_noise_sigma", c.model.router_noise}};
  j["bilinear"] = {{"dim", c.bilinear.dim}, {"eta", c.bilinear.eta}, {"steps", c.bilinear.steps}};
  j["training"] = {{"stage_steps", c.training.stage_steps},
                   {"stage_lr", c.training.stage_lr},
                   {"train_images", c.task.train_images},
                   {"eval_images", c.task.eval_images},
                   {"output_dim", c.task.output_dim},
                   {"text_tokens", c.task.text_tokens},
                   {"texture_amplitude", c.task.texture_amplitude},
                   {"texture_period", c.task.texture_period},
                   {"teacher_nonlinear", c.task.teacher_nonlinear},
                   {"max_grad_norm", c.training.max_grad_norm}};
  return j;
}

namespace detail {

template <class T>
void read_key(const nlohmann::json& section, const std::string& where, const std::string& key, T& out) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (auto it = given.begin(); it != given.end(); ++it)
    if (!known.contains(it.key()))
      throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json defaults = to_json(c);
  detail::reject_unknown(j, defaults, "");
  for (auto it = j.begin(); it != j.end(); ++it)
    detail::reject_unknown(it.value(), defaults.at(it.key()), it.key());

  const nlohmann::json empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& {
    return j.contains(name) ? j.at(name) : empty;
  };
  const auto& s = section("slicing");
  detail::read_key(s, "slicing", "tile", c.task.tile);
  detail::read_key(s, "slicing", "token_grid", c.task.token_grid);
  detail::read_key(s, "slicing", "max_grid", c.task.max_grid);
  detail::read_key(s, "slicing", "min_tiles", c.task.min_tiles);
  detail::read_key(s, "slicing", "max_tiles", c.task.max_tiles);

  const auto& a = section("adapter");
  detail::read_key(a, "adapter", "vision_dim", c.task.vision_dim);
  detail::read_key(a, "adapter", "llm_dim", c.model.llm_dim);
  detail::read_key(a, "adapter", "local_queries", c.model.local_queries);
  detail::read_key(a, "adapter", "gate_noise", c.model.gate_noise);
  if (a.contains("forced_gate") && !a.at("forced_gate").is_null()) {
    std::array<double, 2> g{};
    detail::read_key(a, "adapter", "forced_gate", g);
    c.model.forced_gate = g;
  }

  const auto& r = section("router");
  detail::read_key(r, "router", "gamma", c.model.gamma);
  detail::read_key(r, "router", "train_noise_sigma", c.model.router_noise);

  const auto& b = section("bilinear");
  detail::read_key(b, "bilinear", "dim", c.bilinear.dim);
  detail::read_key(b, "bilinear", "eta", c.bilinear.eta);
  detail::read_key(b, "bilinear", "steps", c.bilinear.steps);

  const auto& t = section("training");
  detail::read_key(t, "training", "stage_steps", c.training.stage_steps);
  detail::read_key(t, "training", "stage_lr", c.training.stage_lr);
  detail::read_key(t, "training", "train_images", c.task.train_images);
  detail::read_key(t, "training", "eval_images", c.task.eval_images);
  detail::read_key(t, "training", "output_dim", c.task.output_dim);
  detail::read_key(t, "training", "text_tokens", c.task.text_tokens);
  detail::read_key(t, "training", "texture_amplitude", c.task.texture_amplitude);
  detail::read_key(t, "training", "texture_period", c.task.texture_period);
  detail::read_key(t, "training", "teacher_nonlinear", c.task.teacher_nonlinear);
  detail::read_key(t, "training", "max_grad_norm", c.training.max_grad_norm);

  try {
    pipeline::validate(c.task);
    pipeline::validate(c.model);
    pipeline::validate(c.training);
    require(c.bilinear.dim >= 2, "bilinear dim must be at least 2");
    require(c.bilinear.eta > 0.0, "bilinear eta must be positive");
    require(c.bilinear.steps >= 0, "bilinear steps must be non-negative");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace slime
