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

#ifndef PSG_PSG_HPP_
#define PSG_PSG_HPP_

#include "psg/cli.hpp"
#include "psg/config.hpp"
#include "psg/continual.hpp"
#include "psg/data.hpp"
#include "psg/distill.hpp"
#include "psg/dual.hpp"
#include "psg/error.hpp"
#include "psg/eval.hpp"
#include "psg/generator.hpp"
#include "psg/matching.hpp"
#include "psg/network.hpp"
#include "psg/optim.hpp"
#include "psg/parallel.hpp"
#include "psg/privacy.hpp"
#include "psg/rng.hpp"
#include "psg/synthetic.hpp"
#include "psg/tensor.hpp"

#endif  // PSG_PSG_HPP_
