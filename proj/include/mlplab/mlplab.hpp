// Copyright 2026 The mlplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPLAB_MLPLAB_HPP
#define MLPLAB_MLPLAB_HPP

#include "mlplab/checkpoint_io.hpp"
#include "mlplab/csv.hpp"
#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/experiment.hpp"
#include "mlplab/idx.hpp"
#include "mlplab/matrix.hpp"
#include "mlplab/mlp.hpp"
#include "mlplab/nodeclassifiers.hpp"
#include "mlplab/pathgrad.hpp"
#include "mlplab/perplexity.hpp"
#include "mlplab/rng.hpp"
#include "mlplab/train.hpp"

#endif  // MLPLAB_MLPLAB_HPP
