"""Scenario schema: typed parsing, strict keys, cross-module audits."""

import copy

import pytest

from safelane.scenarios import (ScenarioError, builtin_path,
                                builtin_scenarios, load_scenario,
                                parse_scenario, resolve_scenario)


def base_doc():
    """Smallest valid document: straight lane, no obstacle, short run."""
    return {
        "version": 1,
        "label": "unit",
        "vehicle": {"mass": 1600.0, "yaw_inertia": 2500.0,
                    "dist_front": 1.2, "dist_rear": 1.4,
                    "cornering_front": 80000.0, "cornering_rear": 80000.0,
                    "speed": 20.0},
        "road": {"lane_width": 3.7,
                 "segments": [{"kind": "straight", "length": 200.0}]},
        "filter": {"lane_mode": "exponential",
                   "obstacle_mode": "exponential",
                   "lane_c1": 15.0, "lane_c2": 15.0,
                   "obstacle_c1": 15.0, "obstacle_c2": 15.0},
        "mpc": {"horizon": 10, "q_diag": [10.0, 1.0, 10.0, 1.0],
                "r": 50.0, "beta": 50.0, "dt": 0.05, "u_max": 0.5,
                "c_psi": 0.013, "c_dpsi": 5e-4,
                "terminal": "scaled_cost"},
        "sim": {"duration": 2.0, "dt_fine": 0.001, "mpc_period": 0.05},
    }


def test_base_doc_builds():
    sc = parse_scenario(base_doc())
    assert sc.label == "unit"
    assert sc.obstacle is None
    assert sc.terminal_set is None
    assert sc.mpc_cfg.horizon == 10
    assert sc.sim_cfg.duration == 2.0


def test_unknown_keys_rejected_everywhere():
    for path in (("typo",), ("vehicle", "typo"), ("road", "typo"),
                 ("filter", "typo"), ("mpc", "typo"), ("sim", "typo")):
        doc = base_doc()
        node = doc
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = 1.0
        with pytest.raises(ScenarioError, match="unknown"):
            parse_scenario(doc)


def test_segment_unknown_key_rejected():
    doc = base_doc()
    doc["road"]["segments"][0]["typo"] = 1.0
    with pytest.raises(ScenarioError, match="segments"):
        parse_scenario(doc)


def test_wrong_types_rejected():
    doc = base_doc()
    doc["vehicle"]["mass"] = "heavy"
    with pytest.raises(ScenarioError, match="must be a number"):
        parse_scenario(doc)
    doc = base_doc()
    doc["vehicle"]["mass"] = True          # bool is not a number here
    with pytest.raises(ScenarioError, match="must be a number"):
        parse_scenario(doc)
    doc = base_doc()
    doc["mpc"]["horizon"] = 10.5
    with pytest.raises(ScenarioError, match="integer"):
        parse_scenario(doc)
    doc = base_doc()
    doc["mpc"]["q_diag"] = [10.0, 1.0]
    with pytest.raises(ScenarioError, match="q_diag"):
        parse_scenario(doc)


def test_missing_blocks_rejected():
    for block in ("vehicle", "road", "mpc", "sim"):
        doc = base_doc()
        del doc[block]
        with pytest.raises(ScenarioError, match=block):
            parse_scenario(doc)


def test_version_checked():
    doc = base_doc()
    doc["version"] = 2
    with pytest.raises(ScenarioError, match="version"):
        parse_scenario(doc)


def test_audit_sampling_consistency():
    doc = base_doc()
    doc["sim"]["mpc_period"] = 0.04
    with pytest.raises(ScenarioError, match="mpc_period"):
        parse_scenario(doc)
    doc = base_doc()
    doc["sim"]["duration"] = 2.0005
    with pytest.raises(ScenarioError, match="fine steps"):
        parse_scenario(doc)


def test_audit_road_length_covers_preview():
    doc = base_doc()
    doc["sim"]["duration"] = 20.0          # needs 20*(20 + 0.55) m > 200 m
    with pytest.raises(ScenarioError, match="road too short"):
        parse_scenario(doc)


def test_audit_reference_bounds():
    doc = base_doc()
    # 1/40 m^-1 at 20 m/s gives a 0.5 rad/s yaw-rate reference, far over
    # the configured c_psi.
    doc["road"]["segments"] = [
        {"kind": "straight", "length": 100.0},
        {"kind": "ramp", "length": 50.0, "curvature": 0.025},
        {"kind": "arc", "length": 100.0, "curvature": 0.025},
    ]
    with pytest.raises(ScenarioError, match="yaw-rate reference"):
        parse_scenario(doc)


def test_audit_obstacle_placement():
    doc = base_doc()
    doc["obstacle"] = {"arc_position": 500.0, "radius": 1.5,
                       "edge_offset": 0.5, "detect_distance": 40.0}
    with pytest.raises(ScenarioError, match="outside the road"):
        parse_scenario(doc)
    doc["obstacle"]["arc_position"] = 100.0
    doc["sim"]["initial_arclength"] = 150.0
    doc["sim"]["duration"] = 1.0           # keep the road long enough
    with pytest.raises(ScenarioError, match="ahead of the vehicle"):
        parse_scenario(doc)


def test_comparison_block():
    doc = base_doc()
    doc["comparison"] = {"peak_override_ratio_max": 0.8}
    sc = parse_scenario(doc)
    assert sc.comparison == {"peak_override_ratio_max": 0.8}
    doc["comparison"]["peak_override_ratio_max"] = -1.0
    with pytest.raises(ScenarioError, match="positive"):
        parse_scenario(doc)


def test_filter_defaults_apply():
    doc = base_doc()
    del doc["filter"]
    sc = parse_scenario(doc)
    assert sc.filter_cfg.lane_mode == "exponential"
    assert sc.filter_cfg.mu_max == pytest.approx(1e4)


def test_builtin_listing_and_resolution():
    names = builtin_scenarios()
    assert "scenario_a_esf" in names
    assert "scenario_b_pticcbf" in names
    # bare name and explicit path load the same scenario
    by_name = resolve_scenario("scenario_a_esf")
    by_path = load_scenario(builtin_path("scenario_a_esf"))
    assert by_name.label == by_path.label
    assert by_name.road.length == by_path.road.length
    with pytest.raises(ScenarioError, match="no built-in scenario"):
        resolve_scenario("missing_name")


@pytest.mark.parametrize("name", builtin_scenarios())
def test_all_shipped_scenarios_build(name):
    sc = resolve_scenario(name)
    assert sc.label == name
    assert sc.road.length > 0.0


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("label: [unclosed\n", encoding="utf-8")
    with pytest.raises(ScenarioError, match="not valid YAML"):
        load_scenario(bad)


def test_mutating_copies_is_safe():
    # deep copies of the same base never share state through parsing
    doc = base_doc()
    frozen = copy.deepcopy(doc)
    parse_scenario(doc)
    assert doc == frozen
