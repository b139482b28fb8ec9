// Copyright (c) 2026, The uqdet Authors. All rights reserved.
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

#pragma once

#include "uqdet/dataset.hpp"
#include "uqdet/density_model.hpp"
#include "uqdet/error.hpp"
#include "uqdet/feature_store.hpp"
#include "uqdet/filtering.hpp"
#include "uqdet/regularizer.hpp"
#include "uqdet/scoring.hpp"
#include "uqdet/synth_lab.hpp"
