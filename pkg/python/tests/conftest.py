import json
from pathlib import Path

import pytest

from src.harness.scenario import parse_scenario

MB = 1_000_000
GB = 1_000_000_000


def s1_document(**parameters):
    """One DataNode with a 100 MB/s disk; c1 starts at 0 s, c2 at 20 s, both 40 MB/s"""
    return {
        "machines": [
            {
                "host": "dn1",
                "vcores": 16,
                "memory": 32768,
                "runs_datanode": True,
                "runs_nodemanager": True,
                "disks": [{"disk_id": "d1", "capacity": 100 * MB}],
            }
        ],
        "files": [
            {
                "name": name,
                "blocks": [
                    {
                        "block_id": f"{name}_b0",
                        "size": 10 * GB,
                        "replicas": [{"host": "dn1", "disk_id": "d1"}],
                    }
                ],
            }
            for name in ("f1", "f2")
        ],
        "container_classes": [
            {"class_name": "gold", "vcores": 1, "memory": 2048, "io_rate": 40 * MB}
        ],
        "container_requests": [
            {
                "container_id": "c1",
                "class_name": "gold",
                "host": "dn1",
                "start_time": 0,
                "file": "f1",
            },
            {
                "container_id": "c2",
                "class_name": "gold",
                "host": "dn1",
                "start_time": 20,
                "file": "f2",
            },
        ],
        "shaping_enabled": True,
        "parameters": {"sim_duration": 60, **parameters},
    }


@pytest.fixture
def s1_doc():
    """Scenario S1 as a decoded JSON document"""
    return s1_document()


@pytest.fixture
def s1(s1_doc):
    return parse_scenario(s1_doc)


@pytest.fixture
def s1_path(tmp_path: Path, s1_doc) -> Path:
    """Scenario S1 written to a temporary file"""
    path = tmp_path / "s1.json"
    path.write_text(json.dumps(s1_doc), encoding="utf-8")
    return path
