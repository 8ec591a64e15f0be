//
// Copyright 2026 The dpbandit Authors
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
//

#pragma once

#include "dpbandit/core.hpp"
#include "dpbandit/error.hpp"
#include "dpbandit/harness.hpp"
#include "dpbandit/io.hpp"
#include "dpbandit/linalg.hpp"
#include "dpbandit/linear.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/random.hpp"
#include "dpbandit/selftest.hpp"
#include "dpbandit/stats.hpp"
#include "dpbandit/stochastic.hpp"
