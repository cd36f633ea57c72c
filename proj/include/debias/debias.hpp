/*
 * Copyright 2026 The tma-debias Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Everything in one include.

#include "debias/core/binary_io.hpp"
#include "debias/core/config_reader.hpp"
#include "debias/core/error.hpp"
#include "debias/core/labels.hpp"
#include "debias/core/random.hpp"
#include "debias/core/types.hpp"
#include "debias/image/image.hpp"
#include "debias/image/png.hpp"
#include "debias/metrics/clinical.hpp"
#include "debias/metrics/report.hpp"
#include "debias/nn/bundle.hpp"
#include "debias/nn/losses.hpp"
#include "debias/nn/mlp.hpp"
#include "debias/nn/optimizer.hpp"
#include "debias/stain/augment.hpp"
#include "debias/stain/macenko.hpp"
#include "debias/stain/preprocess.hpp"
#include "debias/stain/tiling.hpp"
#include "debias/stats/dependence.hpp"
#include "debias/stats/pca.hpp"
#include "debias/synth/assign.hpp"
#include "debias/synth/cohort.hpp"
#include "debias/synth/generate.hpp"
#include "debias/synth/manifest.hpp"
#include "debias/synth/render.hpp"
#include "debias/synth/variables.hpp"
#include "debias/train/audit.hpp"
#include "debias/train/config.hpp"
#include "debias/train/folds.hpp"
#include "debias/train/sampling.hpp"
#include "debias/train/trainer.hpp"
