"""
Seeded random scenario generator for control-plane convergence runs
"""

from __future__ import annotations

import random
from typing import Any, Dict, List

from .scenario import MB, ScenarioConfig, parse_scenario

GB = 1000 * MB


def random_scenario(
    seed: int,
    max_containers: int = 5,
    max_datanodes: int = 2,
    sim_duration: float = 30.0,
) -> ScenarioConfig:
    """
    Build a small valid scenario from `seed`.

    Every DataNode host also runs a NodeManager and may have a NIC limit;
    with some probability an extra compute-only host is added so that remote
    pipes appear.
    """
    rng = random.Random(seed)
    n_dn = rng.randint(1, max_datanodes)
    machines: List[Dict[str, Any]] = []
    for i in range(n_dn):
        disks = [
            {"disk_id": f"d{j}", "capacity": rng.choice([50, 80, 100, 150]) * MB}
            for j in range(rng.randint(1, 2))
        ]
        machines.append(
            {
                "host": f"dn{i + 1}",
                "vcores": 16,
                "memory": 64 * GB,
                "disks": disks,
                "runs_datanode": True,
                "runs_nodemanager": True,
                "nic_capacity": rng.choice([None, 120 * MB]),
            }
        )
    if rng.random() < 0.5:
        machines.append(
            {
                "host": "cn1",
                "vcores": 16,
                "memory": 64 * GB,
                "disks": [{"disk_id": "d0", "capacity": 100 * MB}],
                "runs_nodemanager": True,
            }
        )

    classes = [
        {"class_name": "bronze", "vcores": 1, "memory": 1 * GB, "io_rate": 10 * MB},
        {"class_name": "silver", "vcores": 1, "memory": 1 * GB, "io_rate": 20 * MB},
        {"class_name": "gold", "vcores": 2, "memory": 2 * GB, "io_rate": 40 * MB},
        {"class_name": "batch", "vcores": 1, "memory": 1 * GB, "io_rate": 0},
    ]

    n_containers = rng.randint(1, max_containers)
    files = []
    requests = []
    for c in range(n_containers):
        blocks = []
        for b in range(rng.randint(1, 3)):
            dn = machines[rng.randrange(n_dn)]
            replicas = [
                {"host": dn["host"], "disk_id": rng.choice(dn["disks"])["disk_id"]}
            ]
            if n_dn > 1 and rng.random() < 0.5:
                other = machines[(machines.index(dn) + 1) % n_dn]
                replicas.append(
                    {"host": other["host"], "disk_id": other["disks"][0]["disk_id"]}
                )
            blocks.append(
                {
                    "block_id": f"f{c + 1}_b{b + 1}",
                    "size": rng.randint(20, 200) * MB,
                    "replicas": replicas,
                }
            )
        files.append({"name": f"/data/f{c + 1}", "blocks": blocks})
        requests.append(
            {
                "container_id": f"c{c + 1}",
                "class_name": rng.choice(classes)["class_name"],
                "host": rng.choice(machines)["host"],
                "start_time": round(rng.uniform(0, sim_duration / 2), 2),
                "file": f"/data/f{c + 1}",
            }
        )

    return parse_scenario(
        {
            "machines": machines,
            "files": files,
            "container_classes": classes,
            "container_requests": requests,
            "shaping_enabled": True,
            "parameters": {"sim_duration": sim_duration, "seed": seed},
        }
    )
