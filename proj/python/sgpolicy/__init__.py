# Copyright 2026 The sgpolicy Authors
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

"""Python bindings for the sgpolicy core."""

from ._core import (
    ConfigError,
    InputError,
    LoadError,
    NumericError,
    alpha_bar,
    audit_dataset,
    audit_trace,
    collect,
    evaluate,
    focal_loss,
    labels_from_segments,
    subgoals,
    tasks,
    threshold_advance_times,
    trace,
    train,
)

__all__ = [
    "ConfigError",
    "InputError",
    "LoadError",
    "NumericError",
    "alpha_bar",
    "audit_dataset",
    "audit_trace",
    "collect",
    "evaluate",
    "focal_loss",
    "labels_from_segments",
    "subgoals",
    "tasks",
    "threshold_advance_times",
    "trace",
    "train",
]
