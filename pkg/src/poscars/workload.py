"""Arrival traces, prediction windows and forecasters."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

A_MAX = 10**4
LEARNED = ("ma", "ewma", "kalman", "distr")


class TraceParseError(ValueError):
    pass


@dataclass
class ArrivalTrace:
    counts: np.ndarray  # (K, T) int64
    slot_length_ms: float = 10.0

    @property
    def n_services(self) -> int:
        return self.counts.shape[0]

    @property
    def horizon(self) -> int:
        return self.counts.shape[1]

    def at(self, k: int, t: int) -> int:
        """Arrivals of service k in slot t; zero past the end of the trace."""
        return int(self.counts[k, t]) if t < self.counts.shape[1] else 0


def generate_poisson(rate, horizon: int, seed=None, a_max: int = A_MAX,
                     slot_length_ms: float = 10.0) -> ArrivalTrace:
    """I.i.d. Poisson counts; ``rate`` is a scalar or one mean per service."""
    rates = np.atleast_1d(np.asarray(rate, dtype=float))
    if np.any(rates < 0):
        raise ValueError("arrival rate must be >= 0")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(rates[:, None], size=(len(rates), int(horizon)))
    return ArrivalTrace(np.minimum(counts, a_max).astype(np.int64), slot_length_ms)


def load_trace(path, mode: str = "counts", slot_length_ms: float = 10.0,
               a_max: int = A_MAX) -> ArrivalTrace:
    """Read a trace file.

    ``counts`` mode: one line per slot, comma-separated integers (one column
    per service).  ``timestamps`` mode: one arrival timestamp in milliseconds
    per line (optional ``timestamp_ms`` header, optional second column with
    the service index); arrivals are binned into slots.
    """
    lines = Path(path).read_text().splitlines()
    rows = [(n, ln.strip()) for n, ln in enumerate(lines, 1)
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise TraceParseError("empty trace")
    if mode == "counts":
        data = []
        for n, ln in rows:
            try:
                vals = [int(x) for x in ln.split(",")]
            except ValueError:
                raise TraceParseError(f"line {n}: expected integers, got {ln!r}") from None
            if any(v < 0 for v in vals) or (data and len(vals) != len(data[0])):
                raise TraceParseError(f"line {n}: bad count row {ln!r}")
            data.append(vals)
        counts = np.asarray(data, dtype=np.int64).T
    elif mode == "timestamps":
        if rows[0][1].lower().startswith("timestamp"):
            rows = rows[1:]
            if not rows:
                raise TraceParseError("empty trace")
        stamps, services = [], []
        for n, ln in rows:
            parts = ln.split(",")
            try:
                stamps.append(float(parts[0]))
                services.append(int(parts[1]) if len(parts) > 1 else 0)
            except (ValueError, IndexError):
                raise TraceParseError(f"line {n}: bad timestamp row {ln!r}") from None
        stamps = np.asarray(stamps)
        t0 = stamps.min()
        slots = np.floor((stamps - t0) / slot_length_ms).astype(np.int64)
        K = max(services) + 1
        counts = np.zeros((K, int(slots.max()) + 1), dtype=np.int64)
        np.add.at(counts, (np.asarray(services), slots), 1)
    else:
        raise ValueError(f"unknown trace mode {mode!r}")
    return ArrivalTrace(np.minimum(counts, a_max), slot_length_ms)


def assign_window_sizes(d_avg: int, n_services: int, seed=None) -> list[int]:
    """Window size per service, uniform on the integers ``0..2*d_avg``."""
    if d_avg < 0:
        raise ValueError("average window size must be >= 0")
    rng = np.random.default_rng(seed)
    return [int(x) for x in rng.integers(0, 2 * int(d_avg) + 1, size=n_services)]


def _round(x: float) -> int:
    return max(0, int(math.floor(x + 0.5)))


# ---------------------------------------------------------------- forecasters

@dataclass
class ForecasterSpec:
    """Prediction model.  ``variant`` is one of perfect, all-false-negative,
    false-positive, ma, ewma, kalman, distr."""

    variant: str = "perfect"
    rate: float = 0.0  # false-positive: mean phantom requests per predicted slot
    window: int = 5  # ma
    beta: float = 0.5  # ewma
    process_var: float = 1.0  # kalman
    obs_var: float = 10.0  # kalman
    history_len: int = 200  # distr

    @property
    def learned(self) -> bool:
        return self.variant in LEARNED

    @classmethod
    def parse(cls, text: str) -> "ForecasterSpec":
        """``"perfect"``, ``"false-positive(5)"``, ``"ewma(0.3)"``, ``"kalman(1,10)"`` ..."""
        text = text.strip().lower()
        name, _, rest = text.partition("(")
        args = [float(a) for a in rest.rstrip(")").split(",") if a.strip()] if rest else []
        name = {"fn": "all-false-negative", "fp": "false-positive", "distribution": "distr",
                "moving-average": "ma"}.get(name, name)
        spec = cls(variant=name)
        if name == "false-positive" and args:
            spec.rate = args[0]
        elif name == "ma" and args:
            spec.window = int(args[0])
        elif name == "ewma" and args:
            spec.beta = args[0]
        elif name == "kalman" and args:
            spec.process_var = args[0]
            if len(args) > 1:
                spec.obs_var = args[1]
        elif name == "distr" and args:
            spec.history_len = int(args[0])
        elif name not in ("perfect", "all-false-negative", "false-positive", *LEARNED):
            raise ValueError(f"unknown forecaster {text!r}")
        return spec


class MovingAverage:
    def __init__(self, window: int):
        self.buf = deque(maxlen=max(1, int(window)))

    def observe(self, x):
        self.buf.append(float(x))

    def forecast(self) -> int:
        return _round(sum(self.buf) / len(self.buf)) if self.buf else 0


class Ewma:
    def __init__(self, beta: float, estimate: float | None = None):
        self.beta = float(beta)
        self.estimate = estimate

    def observe(self, x):
        x = float(x)
        self.estimate = x if self.estimate is None else self.beta * x + (1 - self.beta) * self.estimate

    def forecast(self) -> int:
        return 0 if self.estimate is None else _round(self.estimate)


class ScalarKalman:
    """Constant-level model: level random walk with ``process_var``, noisy observations."""

    def __init__(self, process_var: float, obs_var: float):
        self.q, self.r = float(process_var), float(obs_var)
        self.x: float | None = None
        self.p = 0.0

    def observe(self, z):
        z = float(z)
        if self.x is None:
            self.x, self.p = z, self.r
            return
        p = self.p + self.q
        gain = p / (p + self.r) if p + self.r > 0 else 1.0
        self.x += gain * (z - self.x)
        self.p = (1 - gain) * p

    def forecast(self) -> int:
        return 0 if self.x is None else _round(self.x)


class DistributionEstimator:
    """Samples the next value from the empirical histogram of recent history."""

    def __init__(self, history_len: int, rng):
        self.buf = deque(maxlen=max(1, int(history_len)))
        self.rng = rng

    def observe(self, x):
        self.buf.append(int(x))

    def forecast(self) -> int:
        if not self.buf:
            return 0
        return int(self.buf[int(self.rng.integers(len(self.buf)))])


def make_forecaster(spec: ForecasterSpec, rng=None):
    if spec.variant == "ma":
        return MovingAverage(spec.window)
    if spec.variant == "ewma":
        return Ewma(spec.beta)
    if spec.variant == "kalman":
        return ScalarKalman(spec.process_var, spec.obs_var)
    if spec.variant == "distr":
        return DistributionEstimator(spec.history_len, rng if rng is not None else np.random.default_rng())
    raise ValueError(f"{spec.variant} is not a learned forecaster")


def forecast_next(forecaster, history: Sequence[int]) -> int:
    """Feed ``history`` into ``forecaster`` and return its next-slot prediction.

    ``forecaster`` may be a spec (a fresh model is built) or a live model.
    """
    if isinstance(forecaster, ForecasterSpec):
        forecaster = make_forecaster(forecaster, np.random.default_rng(0))
    for x in history:
        forecaster.observe(x)
    return forecaster.forecast()


# ---------------------------------------------------------------- windows

@dataclass
class WindowSlot:
    arrival: int  # true arrival slot
    real: int = 0  # untreated real requests
    phantom: int = 0  # untreated false-positive requests
    predicted: int = 0  # what the window was filled with (real + phantom)
    truth: int = 0  # actual arrivals, known to the simulator only
    predicted_real: int = 0

    @property
    def count(self) -> int:
        return self.real + self.phantom


@dataclass
class PredictionWindow:
    """Untreated requests of one service for slots ``t .. t+D``."""

    service: int
    size: int
    slots: deque = field(default_factory=deque)
    dropped_phantoms: int = 0
    late_real: int = 0  # false-negative shortfall that materialised at arrival

    @property
    def q0(self) -> int:
        return self.slots[0].count if self.slots else 0

    @property
    def qp(self) -> int:
        return sum(s.real + s.phantom for s in self.slots)

    def counts(self) -> list[int]:
        return [s.count for s in self.slots]

    def admit(self, delta: int) -> list[tuple[int, int, bool]]:
        """Remove ``delta`` requests earliest-first; returns ``(arrival, count, phantom)`` runs."""
        out = []
        for s in self.slots:
            if delta <= 0:
                break
            take = min(delta, s.real)
            if take:
                out.append((s.arrival, take, False))
                s.real -= take
                delta -= take
            take = min(delta, s.phantom)
            if take:
                out.append((s.arrival, take, True))
                s.phantom -= take
                delta -= take
        if delta > 0:
            raise ValueError("admitted more requests than the window holds")
        return out

    def fill(self, arrival: int, truth: int, real: int, phantom: int) -> None:
        self.slots.append(WindowSlot(arrival, real, phantom, real + phantom, truth, real))

    def reveal_front(self) -> None:
        """The front slot's requests actually arrive: add the unpredicted ones, drop phantoms."""
        s = self.slots[0]
        short = s.truth - s.predicted_real
        if short > 0:
            s.real += short
            s.predicted += short
            self.late_real += short
        self.dropped_phantoms += s.phantom
        s.predicted -= s.phantom
        s.phantom = 0


class Predictor:
    """Produces the ``(real, phantom)`` fill for a newly visible window slot."""

    def __init__(self, spec: ForecasterSpec, n_services: int, rng):
        self.spec = spec
        self.rng = rng
        self.models = [make_forecaster(spec, rng) for _ in range(n_services)] if spec.learned else None

    def observe(self, k: int, truth: int) -> None:
        if self.models is not None:
            self.models[k].observe(truth)

    def predict(self, k: int, truth: int) -> tuple[int, int]:
        v = self.spec.variant
        if v == "perfect":
            return truth, 0
        if v == "all-false-negative":
            return 0, 0
        if v == "false-positive":
            return truth, int(self.rng.poisson(self.spec.rate)) if self.spec.rate > 0 else 0
        p = self.models[k].forecast()
        return min(p, truth), max(0, p - truth)


def init_window(k: int, size: int, trace: ArrivalTrace, predictor: Predictor, t0: int = 0) -> PredictionWindow:
    """Window at slot ``t0``: the current slot is known, the rest predicted."""
    w = PredictionWindow(k, size)
    a = trace.at(k, t0)
    w.fill(t0, a, a, 0)
    predictor.observe(k, a)
    for d in range(1, size + 1):
        truth = trace.at(k, t0 + d)
        real, ph = predictor.predict(k, truth)
        w.fill(t0 + d, truth, real, ph)
    return w


def advance_window(window: PredictionWindow, next_arrival: int, predictor: Predictor,
                   revealed: int | None = None) -> WindowSlot:
    """Move the window one slot ahead.

    ``next_arrival`` is the true count for the newly visible farthest slot
    and ``revealed`` the true count of the slot that becomes current (only
    needed to feed learned forecasters).  Returns the new farthest slot.
    """
    if window.slots and window.slots[0].count:
        raise ValueError("current-slot requests must be admitted before the window advances")
    t_next = window.slots[0].arrival + 1
    window.slots.popleft()
    if window.size == 0:
        window.fill(t_next, next_arrival, next_arrival, 0)
        predictor.observe(window.service, next_arrival)
        return window.slots[-1]
    window.reveal_front()
    predictor.observe(window.service, window.slots[0].truth if revealed is None else revealed)
    real, ph = predictor.predict(window.service, next_arrival)
    window.fill(t_next + window.size, next_arrival, real, ph)
    return window.slots[-1]
