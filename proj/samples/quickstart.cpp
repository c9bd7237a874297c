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

// Walks through the library: plan a slicing grid, compare the two bilinear
// solvers, then train the toy model with both schedules.

#include <iostream>

#include "slime/bilinear.hpp"
#include "slime/pipeline.hpp"
#include "slime/slicing.hpp"

int main() {
  using namespace slime;

  for (ImageGeom g : {ImageGeom{336, 336}, ImageGeom{1024, 768}, ImageGeom{4000, 600}}) {
    const PartitionPlan p = plan_partition(g);
    std::cout << "plan " << g.width << "x" << g.height << ": " << p.m << "x" << p.n << " tiles, scale "
              << p.scale << ", wasted " << p.wasted << "\n";
  }

  Rng rng(1);
  const bilinear::Instance inst = bilinear::Instance::random(16, 0.5, rng);
  const auto gd = bilinear::run_experiment(inst, bilinear::Init::antisymmetric(), bilinear::Method::gd(0.01), 20000);
  const auto alt = bilinear::run_experiment(inst, bilinear::Init::generic(), bilinear::Method::alternating(), 50);
  std::cout << "bilinear c=0.5: gd " << bilinear::to_string(gd.outcome) << " loss " << gd.final_loss()
            << ", alternating " << bilinear::to_string(alt.outcome) << " loss " << alt.final_loss() << "\n";

  // Default toy settings. Single seeds go either way; the comparison that
  // matters is the median over seeds (see `slime_cli sweep`).
  const pipeline::TrainingConfig train_cfg;
  const pipeline::ModelConfig model_cfg;
  const pipeline::ToyTask task = pipeline::ToyTask::make(pipeline::TaskConfig{}, model_cfg.llm_dim, 1);
  for (pipeline::Mode m : {pipeline::Mode::alternating, pipeline::Mode::e2e}) {
    const pipeline::RunReport r = pipeline::train(pipeline::StageSchedule::make(m, train_cfg, 1), task, model_cfg);
    std::cout << "train " << pipeline::to_string(m) << ": eval " << r.initial_eval << " -> " << r.final_eval
              << " (only global " << r.only_global_eval << ", only local " << r.only_local_eval << ")\n";
  }
}
