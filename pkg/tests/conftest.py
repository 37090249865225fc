import copy

import pytest
from hypothesis import settings

from qptrap.chip import default_layout, layout_from_dict, layout_to_dict

settings.register_profile("repo", deadline=None, max_examples=40)
settings.load_profile("repo")


def slab(specularity=0.5, backside=0.1, regions=(), materials=None, qubits=(), size=6.0, thick=0.525):
    """Small layout dictionary for transport tests."""
    return {
        "chip": {
            "width_mm": size,
            "height_mm": size,
            "substrate_thickness_mm": thick,
            "sound_speed_mm_per_us": 6.0,
            "surface_specularity": specularity,
            "backside_absorb_prob": backside,
        },
        "materials": materials or {},
        "regions": list(regions),
        "injector": {"position_mm": [0.0, 0.0]},
        "qubits": list(qubits),
    }


@pytest.fixture(scope="session")
def layout():
    return default_layout()


@pytest.fixture
def layout_doc(layout):
    return copy.deepcopy(layout_to_dict(layout))


@pytest.fixture
def make_layout():
    return lambda **kw: layout_from_dict(slab(**kw))


# --- acceptance report ------------------------------------------------------------
#
# Tests marked ``acceptance(number, title, limit_s)`` are collected here and
# summarized as one PASS/FAIL line each. Setup time (shared fixtures) counts
# towards the limit.

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    number, title = mark.args[:2]
    limit = mark.kwargs.get("limit_s")
    store = item.config.stash[_ACCEPTANCE]
    entry = store.setdefault(number, {"title": title, "limit": limit, "time": 0.0, "ok": True, "why": ""})
    entry["time"] += report.duration
    if report.failed:
        entry["ok"] = False
        entry["why"] = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else "error"
    if report.when == "teardown" and limit is not None and entry["time"] > limit:
        entry["ok"] = False
        entry["why"] = f"over time limit of {limit} s"


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        e = store[number]
        status = "PASS" if e["ok"] else "FAIL"
        limit = f" (limit {e['limit']} s)" if e["limit"] is not None else ""
        line = f"[{status}] {number:2d}. {e['title']}: {e['time']:.1f} s{limit}"
        if not e["ok"]:
            line += f" -- {e['why'].splitlines()[0] if e['why'] else ''}"
        terminalreporter.write_line(line)
