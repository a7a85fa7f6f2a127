import textwrap
from importlib.resources import files

import pytest
import yaml

from fleettwin.scenario import load_scenario, parse_scenario

SCENARIO_DIR = files("fleettwin") / "scenarios"


@pytest.fixture(scope="session")
def perfect_path():
    return str(SCENARIO_DIR / "perfect.scn")


@pytest.fixture(scope="session")
def failure_path():
    return str(SCENARIO_DIR / "failure.scn")


@pytest.fixture()
def perfect_scenario(perfect_path):
    return load_scenario(perfect_path)


@pytest.fixture()
def failure_scenario(failure_path):
    return load_scenario(failure_path)


MINI_SCN = textwrap.dedent(
    """
    name: mini
    seed: 3
    arena:
      width: 10
      height: 8
      locations:
        home_a: [0, 0]
        home_b: [0, 2]
        target: [4, 0]
        layby: [5, 1]
        battery_depot: [2, 3]
      obstacles: []
    assets:
      plate: {kind: plate, at: target, severity: 0.5}
    items:
      battery_box: {kind: battery, at: battery_depot}
    platforms:
      - id: alpha
        speed: 1.0
        home: home_a
        capabilities: [GroundTraverse, FmcwScan, PickAndPlace, Camera]
        arm_joints: {shoulder: [0, 180]}
        presets: {S: scan_plate}
      - id: bravo
        speed: 2.0
        home: home_b
        capabilities: [Fly, Camera]
        presets: {}
    scripts:
      scan_plate:
        - goto: target
        - scan: plate
        - return
    mission:
      phases:
        - name: only_phase
          triggers: {alpha: S}
    rules:
      - name: battery_fault_recovery
        when: {code: BATF, severity: Fault}
        plan:
          - {verb: Divert, params: {to: $layby}}
          - {verb: Scout, requires: Fly, params: {target: $layby}}
          - {verb: Resume, params: {take: battery_box}}
          - {verb: Notify, params: {reason: recovery}}
    injections: []
    operator_actions: []
    """
)


@pytest.fixture()
def mini_scenario():
    return parse_scenario(MINI_SCN)


def make_no_fly_scenario_file(failure_path, tmp_path):
    """failure.scn with the Fly-capable platform removed, as a real file."""
    doc = yaml.safe_load(open(failure_path).read())
    doc["name"] = "failure_no_fly"
    doc["platforms"] = [p for p in doc["platforms"] if p["id"] != "tello"]
    phases = []
    for phase in doc["mission"]["phases"]:
        triggers = {k: v for k, v in phase["triggers"].items() if k != "tello"}
        if triggers:
            phases.append({"name": phase["name"], "triggers": triggers})
    doc["mission"]["phases"] = phases
    doc["injections"] = [i for i in doc.get("injections", []) if i["platform"] != "tello"]
    doc["operator_actions"] = [
        a for a in doc.get("operator_actions", []) if a["platform"] != "tello"
    ]
    path = tmp_path / "failure_no_fly.scn"
    path.write_text(yaml.safe_dump(doc))
    return str(path)
