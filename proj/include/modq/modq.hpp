/*
 * Copyright 2026 The modq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Umbrella header.

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/explain.hpp"
#include "modq/features.hpp"
#include "modq/forest.hpp"
#include "modq/grid.hpp"
#include "modq/model.hpp"
#include "modq/pipeline.hpp"
#include "modq/rank_eval.hpp"
#include "modq/service.hpp"
#include "modq/synth.hpp"
#include "modq/text.hpp"
#include "modq/time.hpp"
