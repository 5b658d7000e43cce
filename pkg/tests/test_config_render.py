import re

import numpy as np
import pytest
from rhoelastica.config import OUTPUT_ENV, PRESETS, ConfigError, RunConfig, load_config, parse_pairs, preset_text
from rhoelastica.discretization import DiscreteState, Grid
from rhoelastica.model import ModelParams
from rhoelastica.render import render_svg, stroke_widths, write_svg


def test_defaults():
    cfg = RunConfig()
    assert cfg.n == 256 and cfg.j == "auto" and cfg.mode_numbers() is None


def test_preset_file_override_order(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nh = 0.5  # trailing\nn=64\n")
    cfg = load_config(path, ["n=32", "j=1,2"], preset="iv")
    assert (cfg.m, cfg.h, cfg.n) == (1.0, 0.5, 32)
    assert cfg.mode_numbers() == [1, 2]


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_text_round_trip(tmp_path, name):
    path = tmp_path / f"{name}.cfg"
    path.write_text(preset_text(name))
    cfg = load_config(path)
    assert (cfg.m, cfg.h) == PRESETS[name]


@pytest.mark.parametrize("pair, key", [
    ("n=abc", "n"), ("tol=-1", "tol"), ("bogus=1", "bogus"), ("j=0", "j"),
    ("j=x", "j"), ("mu=nan", "mu"), ("preset=vii", "preset"), ("mu_min=20", "mu_min"),
])
def test_errors_name_the_key(pair, key):
    with pytest.raises(ConfigError, match=rf"^{key}:"):
        load_config(overrides=[pair])


def test_malformed_lines_report_location():
    with pytest.raises(ConfigError, match="cfg:2"):
        parse_pairs(["m=1", "no equals sign"], "cfg")


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="config"):
        load_config(tmp_path / "absent.cfg")


def test_output_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert RunConfig(out_dir="elsewhere").output_dir == tmp_path
    monkeypatch.delenv(OUTPUT_ENV)
    assert str(RunConfig(out_dir="elsewhere").output_dir) == "elsewhere"


def _widths(svg):
    return [float(w) for w in re.findall(r'stroke-width="([^"]+)"', svg)]


def test_trivial_renders_constant_width_polygon():
    p = ModelParams(1.0, 1.0, 0.5)
    svg = render_svg(DiscreteState.trivial(Grid(24), p), p, base=0.02)
    widths = _widths(svg)
    assert len(widths) == 24 and len(set(widths)) == 1
    assert svg.count("<line") == 24 and "mu=0.5" in svg


def test_widths_track_density():
    rho = np.array([1.0, 1.2, 0.8, 1.0])
    w = stroke_widths(rho, 0.01, 3.0)
    assert w.argmax() == 1 and w.argmin() == 2
    assert w.min() == pytest.approx(0.01) and w.max() == pytest.approx(0.04)
    assert np.all(stroke_widths(np.ones(5), 0.01, 3.0) == 0.01)


def test_non_finite_state_is_rejected(tmp_path):
    p = ModelParams(1.0, 1.0, 0.5)
    s = DiscreteState.trivial(Grid(8), p)
    s.theta[3] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        write_svg(tmp_path / "x.svg", s, p)


def test_view_box_contains_curve(tmp_path):
    p = ModelParams(1.0, 1.0, 0.5)
    path = write_svg(tmp_path / "a" / "c.svg", DiscreteState.trivial(Grid(16), p), p, label="x")
    text = path.read_text()
    x0, y0, w, h = map(float, re.search(r'viewBox="([^"]+)"', text).group(1).split())
    xs = [float(v) for v in re.findall(r'x[12]="([^"]+)"', text)]
    ys = [float(v) for v in re.findall(r'y[12]="([^"]+)"', text)]
    assert w == h and x0 < min(xs) and max(xs) < x0 + w and y0 < min(ys) and max(ys) < y0 + h
