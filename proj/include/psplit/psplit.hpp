// Copyright 2026 The psplit Authors
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

// Umbrella header.

#ifndef PSPLIT_PSPLIT_HPP_
#define PSPLIT_PSPLIT_HPP_

#include "psplit/advantage.hpp"
#include "psplit/analysis.hpp"
#include "psplit/checkpoint.hpp"
#include "psplit/config.hpp"
#include "psplit/core_math.hpp"
#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/optimizer.hpp"
#include "psplit/parallel.hpp"
#include "psplit/pipeline.hpp"
#include "psplit/policy.hpp"
#include "psplit/rng.hpp"
#include "psplit/rollout_engine.hpp"
#include "psplit/trainer.hpp"
#include "psplit/vocabulary.hpp"

#endif  // PSPLIT_PSPLIT_HPP_
