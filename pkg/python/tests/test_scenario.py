"""Tests for scenario validation and overrides"""

import pytest

from src.harness.scenario import (
    OVERRIDE_KEYS,
    apply_overrides,
    canonical_json,
    load_scenario,
    parse_overrides,
    parse_scenario,
)
from src.simcluster import InvalidScenario

from .conftest import s1_document


def test_defaults(s1):
    """Test parameter defaults"""
    params = s1.parameters
    assert (params.dt, params.poll_interval, params.watch_latency) == (0.1, 1.0, 0.01)
    assert (params.aimd_beta, params.seed, params.read_jitter) == (0.5, 0, 0.0)
    assert s1.shaping_enabled is True


def test_load_from_file(s1_path, s1):
    assert load_scenario(s1_path) == s1


def test_json_text_and_dict_agree(s1):
    """Test parsing canonical JSON text gives the same scenario"""
    assert parse_scenario(canonical_json(s1)) == s1


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d["machines"][0].update(host="dn 1"), "machines.0.host"),
        (lambda d: d["parameters"].update(aimd_beta=1.5), "parameters.aimd_beta"),
        (lambda d: d["parameters"].update(dt=0), "parameters.dt"),
        (lambda d: d["parameters"].update(sim_duration=20), "sim_duration"),
        (
            lambda d: d["container_requests"][1].update(class_name="platinum"),
            "unknown class",
        ),
        (lambda d: d["container_requests"][1].update(file="f9"), "unknown file"),
        (lambda d: d["container_requests"][1].update(host="nm9"), "unknown host"),
        (
            lambda d: d["container_requests"][1].update(container_id="c1"),
            "duplicate container_id",
        ),
        (lambda d: d["container_requests"][1].update(start_time=-1), "start_time"),
        (lambda d: d["container_classes"][0].update(burst=0), "burst"),
        (
            lambda d: d["container_classes"].append(dict(d["container_classes"][0])),
            "duplicate class",
        ),
    ],
)
def test_invalid_documents_name_the_problem(mutate, message):
    """Test validation errors name the offending field"""
    doc = s1_document()
    mutate(doc)
    with pytest.raises(InvalidScenario, match=message):
        parse_scenario(doc)


def test_container_on_host_without_nodemanager():
    """Test a request on a host without NodeManager"""
    doc = s1_document()
    doc["machines"][0]["runs_nodemanager"] = False
    with pytest.raises(InvalidScenario, match="runs no NodeManager"):
        parse_scenario(doc)


def test_parse_overrides():
    """Test parsing key=value overrides"""
    assert parse_overrides(["seed=3", " dt = 0.05 "]) == {"seed": "3", "dt": "0.05"}
    with pytest.raises(InvalidScenario, match="unknown key"):
        parse_overrides(["colour=blue"])
    with pytest.raises(InvalidScenario, match="key=value"):
        parse_overrides(["seed"])
    assert "shaping_enabled" in OVERRIDE_KEYS


def test_overrides_are_revalidated(s1):
    """Test overrides are validated like the document"""
    assert apply_overrides(s1, {"seed": "7"}).parameters.seed == 7
    with pytest.raises(InvalidScenario, match="read_jitter"):
        apply_overrides(s1, {"read_jitter": "2"})
    with pytest.raises(InvalidScenario):
        apply_overrides(s1, {"dt": "fast"})


def test_canonical_json_is_stable(s1):
    text = canonical_json(s1)
    assert text.endswith("\n")
    assert text == canonical_json(parse_scenario(text))
