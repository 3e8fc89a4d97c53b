"""Shared fixtures: panel builders, population-moment oracle, criteria recorder."""
from __future__ import annotations

import numpy as np
import pytest

from ximpact.lagstats import LagStats
from ximpact.panel import panel_from_arrays


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end acceptance criteria (slower)")
    config._criteria_lines = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail summary line per acceptance criterion.

    Returns the verdict so tests can ``assert criterion(...)`` and fail with
    the same message that lands in the terminal summary.
    """
    lines = request.config._criteria_lines

    def record(number: int, description: str, passed: bool, detail: str = "") -> bool:
        text = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {description}"
        if detail:
            text += f" [{detail}]"
        lines[number] = text
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


@pytest.fixture
def population_stats():
    """Build a LagStats bundle from exact population moments of a market spec.

    Every entry is the analytic expectation of the corresponding sample
    moment, so estimators consuming the bundle must recover the generating
    parameters exactly (up to optimizer tolerance where one is involved).
    """

    def build(spec, tau_max, t_lag, tau_min=0):
        from ximpact.decomp import model_covariance, model_response

        kern = spec.kernel
        reach = t_lag + kern.support + tau_max + 1
        c_full = spec.true_sign_correlation(reach)
        sigma_w = spec.true_sigma_w()
        big_r, r = model_response(kern, c_full, tau_max, tau_min)
        sigma, c_cum = {}, {}
        for tau in range(1, tau_max + 1):
            impact, noise = model_covariance(kern, c_full, tau, sigma_w)
            sigma[tau] = impact + noise
            acc = tau * c_full[0]
            for k in range(1, tau):
                acc = acc + (tau - k) * (c_full[k] + c_full[-k])
            c_cum[tau] = acc
        return LagStats(
            n_assets=kern.n_assets,
            t_eff=10**7,
            tau_max=tau_max,
            t_lag=t_lag,
            tau_min=tau_min,
            sigma=sigma,
            c_cum=c_cum,
            c={k: v for k, v in c_full.items() if abs(k) <= t_lag},
            big_r=big_r,
            r=r,
            assets=[f"A{i:03d}" for i in range(kern.n_assets)],
        )

    return build


@pytest.fixture
def daily_panel():
    """Build an intraday-session panel from simulated arrays.

    Sessions are consecutive 180-bin days; the first row of each session is
    dropped, mirroring how file ingestion consumes it to seed the
    within-session price differencing.
    """

    def build(result, normalize=True, bins_per_day=180):
        x, eps = result.returns, result.signs
        t = len(x)
        sid = np.arange(t) // bins_per_day
        keep = np.ones(t, dtype=bool)
        keep[np.r_[0, np.flatnonzero(np.diff(sid)) + 1]] = False
        return panel_from_arrays(x[keep], eps[keep], session_id=sid[keep],
                                 normalize=normalize)

    return build
