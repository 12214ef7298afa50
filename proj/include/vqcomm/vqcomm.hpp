// Copyright 2026-present the vqcomm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "vqcomm/agent.hpp"
#include "vqcomm/analytics.hpp"
#include "vqcomm/checkpoint.hpp"
#include "vqcomm/config.hpp"
#include "vqcomm/core/adam.hpp"
#include "vqcomm/core/dense.hpp"
#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/loss.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/mlp.hpp"
#include "vqcomm/core/rng.hpp"
#include "vqcomm/data.hpp"
#include "vqcomm/protocols.hpp"
#include "vqcomm/quantizer.hpp"
#include "vqcomm/runner.hpp"
#include "vqcomm/version.hpp"
