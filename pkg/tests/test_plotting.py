import pytest

from shaperet.plotting import parse_parameters, plot_pr_curves, plot_sweep


def test_parse_parameters():
    assert parse_parameters("sampler=random;n=200;D=50;k=0.5") == \
        {"sampler": "random", "n": 200, "D": 50, "k": 0.5}


def test_pr_svg_is_deterministic(tmp_path):
    curves = {"Mean": [(0.5, 0.9), (1.0, 0.6)], "SI": [(0.5, 0.7), (1.0, 0.4)]}
    a = plot_pr_curves(curves, tmp_path / "a.svg").read_text()
    b = plot_pr_curves(curves, tmp_path / "b.svg").read_text()
    assert a == b
    assert "<svg" in a and "Recall" in a


def test_sweep(tmp_path):
    rows = [{"method": "Mean", "parameters": f"D={d}", "nn": 0.5 + d / 1000, "tier1": 0.3, "tier2": 0.4,
             "e_measure": 0.2, "dcg": 0.6} for d in (500, 50, 200)]
    path = plot_sweep(rows, "D", tmp_path / "sweep.svg")
    assert "DCG" in path.read_text()


def test_sweep_missing_parameter(tmp_path):
    rows = [{"method": "Mean", "parameters": "n=5", "nn": 1, "tier1": 1, "tier2": 1, "e_measure": 1, "dcg": 1}]
    with pytest.raises(ValueError, match="'D'"):
        plot_sweep(rows, "D", tmp_path / "x.svg")
