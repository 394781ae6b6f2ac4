"""Joint UAV placement and precoder optimization by block alternation.

Each outer iteration moves the UAV for the current precoder and split
(SCA placement), then re-optimizes the precoder and split at the new
position (WMMSE), warm-started from the previous solution. For LoS channels
neither block can lower the weighted sum rate, so the outer trace is
non-decreasing. With Rician fading, placement only sees the large-scale
channel and the outer trace carries no such guarantee.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .placement import PlacementParams, optimize_placement
from .precoder import (PrecoderOptParams, PrecoderResult, Scheme, converged, initial_precoder,
                       noma_order, optimize, scheme_rates)
from .scenario import Scenario
from .signal_model import RateReport, rate_report
from .trace import RunTrace


@dataclass
class JointParams:
    epsilon: float = 1e-4
    max_outer_iterations: int = 30
    precoder: PrecoderOptParams = field(default_factory=PrecoderOptParams)
    placement: PlacementParams = field(default_factory=PlacementParams)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class JointSolution:
    scheme: Scheme
    uav_position: np.ndarray
    precoder: np.ndarray
    rate_split: np.ndarray
    rates: np.ndarray
    wsr: float
    trace: RunTrace
    status: str = "converged"
    order: list[int] | None = None

    def report(self, scenario: Scenario) -> RateReport:
        """Rate breakdown re-evaluated from the stored position, precoder and split."""
        H = scenario.channel_array(self.uav_position)
        if self.scheme is Scheme.RSMA:
            return rate_report(H, self.precoder, self.rate_split, scenario.weights, scenario.sigma2)
        rates, _ = scheme_rates(H, self.precoder, self.scheme, scenario.sigma2,
                                scenario.weights, order=self.order)
        zero = np.zeros_like(rates)
        return RateReport(zero, rates, zero, rates, float(scenario.weights @ rates))


_USABLE = ("converged", "max_iterations")


def default_start(scenario: Scenario) -> np.ndarray:
    """Horizontal centroid of the users at the lowest allowed altitude."""
    return scenario.centroid(scenario.box.z_min)


def _evaluate(scenario: Scenario, q, P, scheme: Scheme, split=None, order=None):
    H = scenario.channel_array(q)
    rates, r = scheme_rates(H, P, scheme, scenario.sigma2, scenario.weights, split, order)
    return rates, r, float(scenario.weights @ rates)


def _pick_order(scenario: Scenario, q, P, current):
    """Strength order at ``q``, unless the previous order does better for ``P``."""
    fresh = noma_order(scenario.channel_array(q))
    if current is None or fresh == list(current):
        return fresh
    *_, w_fresh = _evaluate(scenario, q, P, Scheme.NOMA, order=fresh)
    *_, w_old = _evaluate(scenario, q, P, Scheme.NOMA, order=current)
    return fresh if w_fresh >= w_old else list(current)


def _place(scenario: Scenario, q, P, split, scheme: Scheme, params: PlacementParams, order):
    """Placement block; RSMA also tries without common floors and keeps the better WSR.

    A fixed split can pin the UAV where the common stream is decodable even
    when that stream carries almost nothing. The floored result never lowers
    the WSR, so picking the better of the two keeps that guarantee.
    """
    placed = optimize_placement(q, P, split, scenario, params, scheme, order)
    if scheme is not Scheme.RSMA or not np.any(split > 0):
        return placed
    free = optimize_placement(q, P, split, scenario, params, scheme, order, common_floors=False)
    if free.status not in _USABLE:
        return placed
    if placed.status not in _USABLE:
        return free
    *_, w_placed = _evaluate(scenario, placed.position, P, scheme, split, order)
    *_, w_free = _evaluate(scenario, free.position, P, scheme, split, order)
    return free if w_free > w_placed else placed


def _precoder_step(scenario: Scenario, q, scheme: Scheme, params: PrecoderOptParams,
                   P=None, split=None, order=None) -> PrecoderResult:
    H = scenario.channel_array(q)
    return optimize(H, scheme, scenario.power, scenario.sigma2, scenario.weights, params,
                    scenario.thresholds_per_hz, P_init=P, split_init=split, order=order)


def alternating_optimize(scenario: Scenario, scheme: Scheme = Scheme.RSMA,
                         params: JointParams | None = None, q0=None) -> JointSolution:
    """Alternate placement and precoder blocks until the WSR settles.

    The trace holds the starting point (initial precoder, best split)
    followed by one record per outer iteration (after both blocks). Stops when consecutive outer WSRs differ
    by at most ``params.epsilon`` relative.
    """
    params = params or JointParams()
    scheme = Scheme(scheme)
    q = default_start(scenario) if q0 is None else np.asarray(q0, dtype=float).copy()
    if not scenario.box.contains(q, 1e-9):
        raise ValueError("initial UAV position must lie inside the placement box")

    H = scenario.channel_array(q)
    order = noma_order(H) if scheme is Scheme.NOMA else None
    rng = np.random.default_rng(params.precoder.seed)
    P = initial_precoder(H, scenario.power, scheme, params.precoder.init_strategy, rng)
    rates, split, wsr = _evaluate(scenario, q, P, scheme, None, order)
    trace = RunTrace()
    trace.log(wsr, position=q, rates=rates)
    status = "max_iterations"
    failures = 0
    for _ in range(params.max_outer_iterations):
        placed = _place(scenario, q, P, split, scheme, params.placement, order)
        place_failed = placed.status not in _USABLE
        q_new = q if place_failed else placed.position

        if scheme is Scheme.NOMA:
            order = _pick_order(scenario, q_new, P, order)
        step = _precoder_step(scenario, q_new, scheme, params.precoder, P, split, order)
        prec_failed = step.status not in _USABLE
        failures = failures + 1 if (place_failed and prec_failed) else 0
        if failures >= 2:
            status = "aborted: placement and precoder blocks both infeasible twice in a row"
            trace.log(wsr, position=q, rates=rates, status=status)
            break

        # keep the last feasible iterate of a failed block
        q = q_new
        P_new, split_new = (P, split) if prec_failed else (step.precoder, step.split)
        new_rates, new_split, new_wsr = _evaluate(scenario, q, P_new, scheme, split_new, order)
        step_status = "ok" if not (place_failed or prec_failed) else \
            f"placement:{placed.status}" if place_failed else f"precoder:{step.status}"
        P, split, rates = P_new, new_split, new_rates
        trace.log(new_wsr, position=q, rates=rates, status=step_status)
        done = converged(new_wsr, wsr, params.epsilon)
        wsr = new_wsr
        if done:
            status = "converged"
            break
    trace.status = status
    return JointSolution(scheme, q, P, split, rates, wsr, trace, status, order)


def sdma_optimize(channels, scenario: Scenario, params: PrecoderOptParams | None = None):
    """Private streams only (no common stream); returns ``(precoder, split)``."""
    res = optimize(channels, Scheme.SDMA, scenario.power, scenario.sigma2, scenario.weights,
                   params, scenario.thresholds_per_hz)
    return res.precoder, res.split


def noma_optimize(channels, scenario: Scenario, params: PrecoderOptParams | None = None):
    """Superposition coding with successive decoding, weakest user decoded first."""
    res = optimize(channels, Scheme.NOMA, scenario.power, scenario.sigma2, scenario.weights,
                   params, scenario.thresholds_per_hz)
    return res.precoder, res.split


def avg_location_position(scenario: Scenario) -> np.ndarray:
    box = scenario.box
    return scenario.centroid(0.5 * (box.z_min + box.z_max))


def avg_location_baseline(scenario: Scenario, scheme: Scheme = Scheme.RSMA,
                          params: JointParams | None = None) -> JointSolution:
    """Fixed UAV at the users' centroid and mid altitude; precoder optimization only."""
    params = params or JointParams()
    scheme = Scheme(scheme)
    q = avg_location_position(scenario)
    res = _precoder_step(scenario, q, scheme, params.precoder)
    rates, split, wsr = _evaluate(scenario, q, res.precoder, scheme, res.split, res.order)
    for rec in res.trace.records:
        rec.position = tuple(float(v) for v in q)
    return JointSolution(scheme, q, res.precoder, split, rates, wsr, res.trace, res.status, res.order)
