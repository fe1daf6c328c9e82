import sys

import numpy as np
import pytest

from merisc.em import calibrate_state_table, incidence_matrix
from merisc.qos import build_context, dbm_to_watt
from merisc.scene import SceneConfig, build_scene, make_snapshot

LAMBDA_W = dbm_to_watt(46.0)
SIGMA2_W = dbm_to_watt(-96.0)
DESK_AREA = (-4.0, 4.0, 1.0, 7.0)


def desk_config(**kw) -> SceneConfig:
    base = dict(bs_rows=8, bs_cols=8, bs_position=(-3.0, 3.0, 2.5), ris_rows=8, ris_cols=8,
                ris_side=0.3424, wall_width=0.6, wall_height=0.6, origin=(0.0, 0.0, 2.0),
                user_area=DESK_AREA)
    base.update(kw)
    return SceneConfig(**base)


def tiny_config(**kw) -> SceneConfig:
    base = dict(bs_rows=2, bs_cols=2, bs_position=(-3.0, 3.0, 2.5), ris_rows=2, ris_cols=2,
                ris_side=0.0856, wall_width=0.3, wall_height=0.3, origin=(0.0, 0.0, 2.0),
                user_area=DESK_AREA)
    base.update(kw)
    return SceneConfig(**base)


@pytest.fixture(scope="session")
def desk_scene():
    return build_scene(desk_config())


@pytest.fixture(scope="session")
def table3():
    return calibrate_state_table(3)


@pytest.fixture(scope="session")
def table1():
    return calibrate_state_table(1)


@pytest.fixture(scope="session")
def desk_inc(desk_scene):
    return incidence_matrix(desk_scene)


@pytest.fixture(scope="session")
def desk_ctx(desk_scene, table3, desk_inc):
    snap = make_snapshot(1, np.array([[1.0, 3.0], [-1.5, 5.0]]), scene=desk_scene)
    return build_context(desk_scene, table3, snap, LAMBDA_W, SIGMA2_W, inc=desk_inc)


@pytest.fixture(scope="session")
def tiny_scene():
    return build_scene(tiny_config())


@pytest.fixture(scope="session")
def tiny_ctx(tiny_scene, table1):
    snap = make_snapshot(1, np.array([[1.0, 3.0], [-1.5, 5.0]]), scene=tiny_scene)
    return build_context(tiny_scene, table1, snap, LAMBDA_W, SIGMA2_W)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
