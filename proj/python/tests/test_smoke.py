# Copyright 2026 The HyFunc Authors.
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

import json
import math

import pytest

import hyfunc

WEATHER = json.dumps(
    [
        {
            "name": "get_weather",
            "description": "Get the weather.",
            "parameters": [
                {"name": "location", "type": "string", "required": True},
                {"name": "time", "type": "string", "required": True},
            ],
        }
    ]
)

SMALL_CONFIG = json.dumps(
    {
        "provider": {"dim": 32},
        "retriever": {"hidden": 32, "out": 16},
        "retriever_train": {"epochs": 5},
        "lm": {"embed_dim": 8, "window": 16, "hidden": 16},
        "lms_train": {"epochs": 1},
    }
)


def test_template_text():
    assert (
        hyfunc.compile_template(WEATHER, "get_weather", True)
        == "get_weather(location=<param></param>, time=<param></param>)"
    )


def test_validate_output_and_errors():
    assert hyfunc.validate_output(WEATHER, "get_weather", 'get_weather(location="USA", time="today")') == [
        '"USA"',
        '"today"',
    ]
    with pytest.raises(hyfunc.HyfuncError):
        hyfunc.validate_output(WEATHER, "get_weather", 'get_weather(location="USA")')
    with pytest.raises(hyfunc.HyfuncError):
        hyfunc.compile_template("[]", "x")


def test_serialize_and_exact_match():
    call = hyfunc.serialize_call("get_weather", [("location", '"USA"'), ("time", '"today"')])
    assert call == 'get_weather(location="USA", time="today")'
    permuted = 'get_weather(time="today", location="USA")'
    assert hyfunc.exact_match([call], [permuted]) == 1
    assert hyfunc.exact_match([call], [call, call]) == 0


def test_infonce_values():
    assert hyfunc.infonce_loss([[1.0, 2.0]], [[0.5, -1.0]], 0.07) == 0.0
    eye = [[1.0, 0.0], [0.0, 1.0]]
    assert abs(hyfunc.infonce_loss(eye, eye, 1.0) - math.log1p(math.exp(-1.0))) < 1e-9


def test_small_pipeline_round_trip(tmp_path):
    data = hyfunc.generate_synthetic(n_functions=4, queries_per_function=5, value_vocab=5, seed=1)
    pipe = hyfunc.Pipeline.prepare(data["library"], data["train"], SMALL_CONFIG)
    assert json.loads(pipe.config_json)["provider"]["dim"] == 32
    assert len(pipe.lms_curve) == 1
    query = json.loads(data["test"].splitlines()[0])["query"]
    out = pipe.infer(query)
    assert out["text"].startswith("[") and out["text"].endswith("]")
    assert out["selected"]
    pipe.save(str(tmp_path))
    again = hyfunc.Pipeline.load(str(tmp_path))
    assert again.infer(query) == out
    report = json.loads(again.evaluate(data["test"]))
    assert report["n_records"] == len(data["test"].splitlines())
    assert 0.0 <= report["call_em"] <= 1.0


def test_cli_bridge():
    code, out, _ = hyfunc.run_cli(["--help"])
    assert code == 0 and "gen-data" in out
    code, _, _ = hyfunc.run_cli(["no-such-command"])
    assert code == 1
