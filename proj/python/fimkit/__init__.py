# Copyright 2026 The fimkit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Zero-shot imputation of ODE time series with a foundation inference model."""

from ._fimkit import (
    FimRuntimeError,
    GapModel,
    LocalModel,
    ValidationError,
    benchmark,
    corrupt,
    generate_record,
    metrics,
    read_series,
    simulate,
    spline,
)

__all__ = [
    "FimRuntimeError",
    "GapModel",
    "LocalModel",
    "ValidationError",
    "benchmark",
    "corrupt",
    "generate_record",
    "metrics",
    "read_series",
    "simulate",
    "spline",
]
__version__ = "0.1.0"
