// Copyright 2026 The liquidbench Authors
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

// Quad-precision scalar for finite-difference reference models.

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

#include "liquidbench/backbone.hpp"
#include "liquidbench/diffusion_head.hpp"
#include "liquidbench/liquid_head.hpp"

namespace lqb {

using Quad = boost::multiprecision::float128;

extern template class Backbone<Quad>;
extern template class LiquidHead<Quad>;
extern template class DiffusionHead<Quad>;

}  // namespace lqb
