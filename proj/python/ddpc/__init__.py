# Copyright 2026 The ddpc Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Data-driven predictive control for multi-agent collision avoidance.

Thin bindings over the C++ library; see the README for the command line tool.
"""

from ddpc._core import (  # noqa: F401
    DimensionError,
    NumericalError,
    ScenarioError,
    StateSpace,
    behavior_matrix,
    collect,
    compare,
    design_stabilizing_gain,
    erf,
    erf_inv,
    excitation_order,
    hankel,
    is_persistently_exciting,
    load_scenario,
    make_drone_model,
    mc_collision_probability,
    min_samples,
    normal_cdf,
    plotdata,
    relax_collision,
    run,
    simulate_closed_loop,
    simulate_open_loop,
    solve_qp,
    span_residual,
    spectral_radius,
    step,
    uniform_excitation,
)

__version__ = "0.1.0"
