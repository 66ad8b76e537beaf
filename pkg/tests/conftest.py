import sys
from datetime import datetime, timezone

import numpy as np
import pytest

from carbonshift import kernels
from carbonshift.spatial import RegionCatalog, RegionInfo
from carbonshift.trace import CarbonTrace

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def make_trace(values, region="R", start=T0):
    return CarbonTrace(region, start, np.asarray(values, dtype=float))


def make_catalog(series: dict, groups: dict | None = None):
    groups = groups or {}
    return RegionCatalog(
        {r: RegionInfo(make_trace(v, r), geo_group=groups.get(r, "")) for r, v in series.items()}
    )


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
