from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from roomverb.context import (DEFAULT_TABLE, AcousticParameterVector, CalibrationEntry, ParameterGrid, SceneType,
                              calibrate, format_param_table, load_param_table, params_for_scene,
                              parse_param_table, validate_table)
from roomverb.errors import EmptyDataset, EmptyGrid, IncompleteTable, ParseError


def toy_synth(descriptor, p):
    """Cheap stand-in: a scene is a baseline RT60 vector, refined like the real model."""
    tilt = 1 + p.reverb_brightness * np.log2(np.array([62.5, 125, 250, 500, 1000, 2000, 4000, 8000]) / 1000) / 3.5
    return np.asarray(descriptor) * p.rt_modulator * tilt + 0.3 * p.reverb_gain + 0.05 * p.reflection_gain


SMALL = ParameterGrid((0.0, 0.1, 0.2), (0.8, 1.0, 1.2), (-0.2, 0.0, 0.2), (0.4, 0.8))


def planted(point, types=tuple(SceneType), n=2, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for s in types:
        for _ in range(n):
            base = rng.uniform(0.3, 1.5, 8)
            out.append(CalibrationEntry(base, s, toy_synth(base, point)))
    return out


def test_default_table_lookup():
    table = load_param_table()
    assert table == validate_table(DEFAULT_TABLE)
    assert params_for_scene("bedroom", table) == table[SceneType.BEDROOM]


def test_incomplete_table():
    partial = dict(DEFAULT_TABLE)
    del partial[SceneType.OUTDOOR]
    with pytest.raises(IncompleteTable):
        validate_table(partial)
    with pytest.raises(IncompleteTable):
        parse_param_table("scene_type,reverb_gain,rt_modulator,reverb_brightness,reflection_gain\nother,0,1,0,1\n")


def test_table_round_trip():
    table = {s: AcousticParameterVector(0.1 * i, 1.0 + 0.05 * i, -0.2, 0.3) for i, s in enumerate(SceneType)}
    assert parse_param_table(format_param_table(table)) == table


def test_bad_rows_and_parameters():
    with pytest.raises(ParseError):
        parse_param_table("other,1,2\n")
    with pytest.raises(ParseError):
        SceneType.parse("kitchen")
    with pytest.raises(ValueError):
        AcousticParameterVector(0.1, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        AcousticParameterVector(0.1, 1.0, 1.5, 1.0)


def test_default_grid_size():
    grid = ParameterGrid()
    assert len(grid) == 1925 and len(grid.points()) == 1925
    assert grid.reverb_gain == (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    assert ParameterGrid.from_mapping(grid.to_mapping()) == grid


def test_empty_grid():
    with pytest.raises(EmptyGrid):
        ParameterGrid(reverb_gain=())


def test_single_point_grid():
    grid = ParameterGrid((0.1,), (1.0,), (0.0,), (0.8,))
    res = calibrate(planted(AcousticParameterVector(0.2, 1.2, 0.2, 0.4)), grid, toy_synth)
    assert all(p == AcousticParameterVector(0.1, 1.0, 0.0, 0.8) for p in res.table.values())


def test_planted_optimum_recovered():
    point = AcousticParameterVector(0.2, 1.2, -0.2, 0.8)
    res = calibrate(planted(point), SMALL, toy_synth)
    for s in SceneType:
        assert res.table[s] == point
        assert res.mae[s] == pytest.approx(0.0, abs=1e-12)


def test_tie_break_prefers_small_values():
    # a synthesizer blind to every parameter makes the whole grid tie
    res = calibrate(planted(AcousticParameterVector(0, 1, 0, 0.4)), SMALL, lambda d, p: np.ones(8))
    assert all(p == AcousticParameterVector(0.0, 0.8, 0.0, 0.4) for p in res.table.values())


def test_tie_break_symmetric_brightness():
    # only |brightness| matters to this synthesizer: +b and -b tie, smaller |b| wins
    synth = lambda d, p: np.full(8, abs(p.reverb_brightness))  # noqa: E731
    data = [CalibrationEntry(None, "other", np.full(8, 0.2))]
    res = calibrate(data, SMALL, synth, [SceneType.OTHER])
    assert abs(res.table[SceneType.OTHER].reverb_brightness) == pytest.approx(0.2)


def test_exhaustive_optimum():
    rng = np.random.default_rng(1)
    data = [CalibrationEntry(rng.uniform(0.3, 1.5, 8), "bedroom", rng.uniform(0.2, 2.0, 8)) for _ in range(3)]
    res = calibrate(data, SMALL, toy_synth, ["bedroom"])
    brute = min(
        (float(np.mean([np.abs(toy_synth(e.descriptor, AcousticParameterVector(*v)) - e.rt60) for e in data])),
         AcousticParameterVector(*v).sort_key(), AcousticParameterVector(*v))
        for v in product(SMALL.reverb_gain, SMALL.rt_modulator, SMALL.reverb_brightness, SMALL.reflection_gain))
    assert res.table[SceneType.BEDROOM] == brute[2]
    assert res.mae[SceneType.BEDROOM] == pytest.approx(brute[0], rel=1e-12)


def test_missing_scene_type():
    data = planted(AcousticParameterVector(0, 1, 0, 0.4), types=(SceneType.BEDROOM,))
    with pytest.raises(EmptyDataset, match="living_room"):
        calibrate(data, SMALL, toy_synth, ["bedroom", "living_room"])


def test_deterministic_and_worker_invariant():
    rng = np.random.default_rng(2)
    data = [CalibrationEntry(rng.uniform(0.3, 1.5, 8), s, rng.uniform(0.2, 2.0, 8)) for s in SceneType for _ in range(2)]
    a = calibrate(data, SMALL, toy_synth)
    b = calibrate(data, SMALL, toy_synth)
    c = calibrate(data, SMALL, toy_synth, workers=4)
    assert a.table == b.table == c.table
    assert a.mae == c.mae


@given(st.sampled_from(SMALL.points()))
@hsettings(max_examples=30, deadline=None)
def test_any_planted_point_gives_zero_error(point):
    res = calibrate(planted(point, types=(SceneType.OTHER,), n=1), SMALL, toy_synth, ["other"])
    assert res.mae[SceneType.OTHER] <= 1e-12
