import functools
import os

import numpy as np
import pytest

from spbc.fixtures import FIXTURES
from spbc.minimize import refine_state
from spbc.stability import full_monodromy_check, monodromy, stability_verdict


@functools.lru_cache(maxsize=None)
def refined(key):
    """Shooting-refined seed and report for a published fixture."""
    fx = FIXTURES[key]
    return refine_state(fx.state(), fx.theta, fx.masses)


@functools.lru_cache(maxsize=None)
def monodromy_matrix(key):
    fx = FIXTURES[key]
    seed, _ = refined(key)
    return monodromy(seed, fx.period, fx.masses)


@functools.lru_cache(maxsize=None)
def stability_report(key):
    """Reduced verdict plus the full-dimension multipliers for a fixture."""
    fx = FIXTURES[key]
    seed, _ = refined(key)
    rep = stability_verdict(monodromy_matrix(key))
    rep.full_multipliers, rep.full_max_modulus = full_monodromy_check(seed, fx.period, fx.masses)
    return rep


@functools.lru_cache(maxsize=None)
def outer_minimizer(theta, mu):
    from spbc.dynamics import MassModel
    from spbc.minimize import minimize_outer
    return minimize_outer(theta, MassModel.from_mu(mu))


@pytest.fixture
def rng():
    return np.random.default_rng(20240519)


@pytest.fixture(autouse=True)
def _isolated_archive(tmp_path, monkeypatch):
    monkeypatch.setenv("SPBC_ARCHIVE_DIR", str(tmp_path / "archive"))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SPBC_FAMILY_SUITE"):
        return
    skip = pytest.mark.skip(reason="set SPBC_FAMILY_SUITE=1 to run the P = 3..15 family sweep")
    for item in items:
        if "family" in item.keywords:
            item.add_marker(skip)


# criterion number -> summary line, filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
