/*
   Copyright 2026 The metapop Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include "metapop/rng.hpp"
#include "metapop/type_space.hpp"
#include "metapop/state.hpp"
#include "metapop/model.hpp"
#include "metapop/events.hpp"
#include "metapop/paths.hpp"
#include "metapop/det_path.hpp"
#include "metapop/ssa.hpp"
#include "metapop/det_solver.hpp"
#include "metapop/models.hpp"
#include "metapop/tagged.hpp"
#include "metapop/invasion.hpp"
#include "metapop/audit.hpp"
#include "metapop/branching.hpp"
#include "metapop/parallel.hpp"
#include "metapop/stats.hpp"
#include "metapop/config.hpp"
#include "metapop/experiments.hpp"
