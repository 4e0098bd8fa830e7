import io
import math

import numpy as np
import pytest

from rmmht import InvalidArgument
from rmmht.simulation import (DEG, ScenarioConfig, Segment, generate_scans_labeled,
                              generate_truth, load_scenario, read_scans_csv, region_volume,
                              scenario_metadata, surveillance_region, write_scans_csv,
                              write_truth_csv)


def test_preset_has_70_steps_and_three_targets():
    truth = generate_truth(ScenarioConfig())
    assert truth.times == list(range(1, 71))
    assert all(X.shape == (3, 4) for X in truth.states)


def test_formation_spacing_and_heading_changes():
    truth = generate_truth(ScenarioConfig())
    P = truth.positions(0)
    np.testing.assert_allclose(np.diff(P[:, 1]), [1000.0, 1000.0])
    heading = lambda X: math.degrees(math.atan2(X[0, 3], X[0, 1]))
    assert heading(truth.states[0]) == pytest.approx(180.0)
    # +1 deg/s for 90 s turns the formation to the south (-90 deg)
    assert heading(truth.states[37]) == pytest.approx(-90.0, abs=1e-9)
    assert heading(truth.states[55]) == pytest.approx(180.0, abs=1e-9) or \
        heading(truth.states[55]) == pytest.approx(-180.0, abs=1e-9)
    speeds = [np.hypot(X[:, 1], X[:, 3]) for X in truth.states]
    np.testing.assert_allclose(speeds, 120.0)


def test_clean_scans_have_one_row_per_target():
    cfg = ScenarioConfig(lambda_f=0.0, P_d=1.0)
    truth = generate_truth(cfg)
    scans, origins = generate_scans_labeled(truth, cfg, np.random.default_rng(0))
    assert all(s.count == 3 for s in scans)
    assert all(sorted(o) == [1, 2, 3] for o in origins)


def test_clutter_statistics():
    cfg = ScenarioConfig()
    truth = generate_truth(cfg)
    scans, origins = generate_scans_labeled(truth, cfg, np.random.default_rng(0))
    n_clutter = [int(np.sum(o == 0)) for o in origins]
    assert np.mean(n_clutter) == pytest.approx(50.0, abs=3.0)
    xmin, xmax, ymin, ymax = surveillance_region(truth, cfg)
    Z = np.vstack([s.measurements[o == 0] for s, o in zip(scans, origins)])
    assert Z[:, 0].min() >= xmin and Z[:, 0].max() <= xmax
    assert Z[:, 1].min() >= ymin and Z[:, 1].max() <= ymax
    det = sum(int(np.sum(o > 0)) for o in origins)
    assert det / (3 * 70) == pytest.approx(0.9, abs=0.05)


def test_region_is_bbox_plus_margin():
    cfg = ScenarioConfig()
    truth = generate_truth(cfg)
    bx = truth.bounding_box()
    reg = surveillance_region(truth, cfg)
    assert reg == (bx[0] - 2000, bx[1] + 2000, bx[2] - 2000, bx[3] + 2000)
    assert region_volume(reg) == pytest.approx((reg[1] - reg[0]) * (reg[3] - reg[2]))


def test_scan_csv_roundtrip_and_determinism():
    cfg = ScenarioConfig()
    truth = generate_truth(cfg)

    def dump():
        scans, origins = generate_scans_labeled(truth, cfg, np.random.default_rng(7))
        fh = io.StringIO()
        write_scans_csv(fh, scans, scenario_metadata(cfg, truth), origins)
        return fh.getvalue(), scans, origins

    text, scans, origins = dump()
    assert text == dump()[0]
    back, orig_back = read_scans_csv(io.StringIO(text))
    for a, b in zip(scans, back):
        assert np.array_equal(a.measurements, b.measurements)
    for a, b in zip(origins, orig_back):
        assert np.array_equal(a, b)
    fh = io.StringIO()
    write_truth_csv(fh, truth)
    assert fh.getvalue().count("\n") == 1 + 70 * 3


def test_config_file(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[scenario]\nP_d = 0.8\nlambda_f = 10\nseed = 4\n"
                 "[segment.1]\nkind = CV\nduration = 5\n"
                 "[segment.2]\nkind = CT\nduration = 3\nomega = 0.02\n")
    cfg = load_scenario(p)
    assert cfg.P_d == 0.8 and cfg.lambda_f == 10.0 and cfg.seed == 4
    assert cfg.num_steps == 8 and cfg.segments[1].omega == 0.02


@pytest.mark.parametrize("kw", [dict(P_d=0.0), dict(lambda_f=-1.0), dict(sigma_z=0.0),
                                dict(region=(0.0, 0.0, 0.0, 1.0))])
def test_invalid_scenarios(kw):
    with pytest.raises(InvalidArgument):
        ScenarioConfig(**kw)


def test_invalid_segment():
    with pytest.raises(InvalidArgument):
        Segment("XY", 3)
