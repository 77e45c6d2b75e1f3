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

import numpy as np
import pytest

import sgpolicy


def test_tasks_and_subgoals():
    assert sgpolicy.tasks() == ["pick_place", "slide_push", "drawer_open_place"]
    for task in sgpolicy.tasks():
        assert len(sgpolicy.subgoals(task)) >= 2
    with pytest.raises(ValueError):
        sgpolicy.subgoals("juggle")


def test_focal_reference_values():
    assert sgpolicy.focal_loss(0.5, 1) == pytest.approx(0.043322, abs=5e-7)
    assert sgpolicy.focal_loss(0.9, 0) == pytest.approx(1.39882, abs=5e-6)


def test_schedule_is_decreasing():
    ab = np.array(sgpolicy.alpha_bar(50, 1e-4, 0.02))
    assert ab.shape == (50,)
    assert np.all(np.diff(ab) < 0)
    assert ab[0] == pytest.approx(1 - 1e-4, abs=1e-15)


def test_labels_and_threshold_rule():
    assert sgpolicy.labels_from_segments([3, 2]) == [1, 1, 0, 1, 0]
    scores = np.array([[0.9, 0.9], [0.1, 0.9], [0.5, 0.05]])
    assert sgpolicy.threshold_advance_times(scores, 0.2) == [1, 2]


def test_end_to_end(tmp_path):
    data = tmp_path / "data"
    assert sgpolicy.collect("pick_place", 2, 0, data) == 2
    assert sgpolicy.audit_dataset(data) == []
    model = tmp_path / "m.ckpt"
    loss = sgpolicy.train(data, model, epochs=1, point_widths=[8, 8],
                          hidden=[16, 16], diffusion_steps=5)
    assert np.isfinite(loss)
    report = sgpolicy.evaluate(model, episodes=2, subgoal_timeout=5)
    assert report["episodes"] == 2
    assert 0.0 <= report["success_rate"] <= 1.0
    trace = tmp_path / "t.jsonl"
    sgpolicy.trace(model, trace, subgoal_timeout=5, oracle=True)
    assert sgpolicy.audit_trace(trace) == []
    with pytest.raises(sgpolicy.LoadError):
        sgpolicy.evaluate(tmp_path / "missing.ckpt")
