"""Monte Carlo harness: seeded Rayleigh trials, method sweeps and CSV output.

Per-trial CSV columns
    trial, method, delta, target_db, verdict, power, max_cert_mse, wall_ms

``verdict`` is ``feasible`` only when a design exists and its worst-case
certificate passes; ``infeasible`` when the solver proves infeasibility;
``failed`` when neither could be established. ``power`` and
``max_cert_mse`` are blank unless a design exists; ``wall_ms`` is blank
unless timing was requested, so default outputs are byte-reproducible.

Summary CSV columns
    method, target_db, delta, n_trials, feasible_fraction, n_common,
    avg_power, saturated

``avg_power`` averages over the common-feasible trials (feasible for every
method at every grid point up to the cap). It is blank and ``saturated=1``
when any common trial is not feasible at that point, the finite-sample
rendering of an unbounded average.
"""
import configparser
import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .design import (BisectionConfig, order_blast, order_weighted, solve_max_delta,
                     solve_minimax, solve_power_min)
from .embed import embed_row
from .formulations import ProblemData
from .metrics import QoSTargets
from .uncertainty import OracleBudget, make_interval, make_spherical

log = logging.getLogger(__name__)

METHODS = ("linear-robust", "thp-robust-order1", "thp-robust-order2", "perfect-csi")
ROBUST_METHODS = METHODS[:3]
TRIAL_HEADER = ("trial", "method", "delta", "target_db", "verdict", "power", "max_cert_mse", "wall_ms")
SUMMARY_HEADER = ("method", "target_db", "delta", "n_trials", "feasible_fraction", "n_common",
                  "avg_power", "saturated")
MAXDELTA_HEADER = ("trial", "method", "target_db", "delta_max", "bracket_lo", "bracket_hi",
                   "iterations", "cap_hit", "lower_bound_only")
MINIMAX_HEADER = ("trial", "method", "delta", "p_total", "zeta0", "sqrt_lo", "sqrt_hi",
                  "iterations", "upper_failed", "max_cert_mse")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one Monte Carlo study.

    ``deltas`` are sphere radii, or per-coordinate halfwidths of the real
    embedded offset for ``uncertainty="interval"``. ``sinr_cap_db`` and
    ``delta_cap`` bound the grid points used to pick common-feasible trials.
    """

    n_tx: int = 3
    n_users: int = 3
    trials: int = 200
    seed: int = None
    deltas: tuple = (0.05,)
    targets_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0)
    p_totals: tuple = (1.0, 10.0, 100.0)
    methods: tuple = METHODS
    uncertainty: str = "sphere"
    workers: int = 1
    sigma: float = 1.0
    sinr_cap_db: float = 6.0
    delta_cap: float = 0.015
    oracle_samples: int = 10_000
    timing: bool = False

    def __post_init__(self):
        for name in ("deltas", "targets_db", "p_totals", "methods"):
            val = getattr(self, name)
            val = (val,) if np.isscalar(val) else tuple(val)
            if not val:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, val)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n_users > self.n_tx:
            raise ValueError("need at least as many antennas as users")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.uncertainty not in ("sphere", "interval"):
            raise ValueError("uncertainty must be 'sphere' or 'interval'")
        if any(d < 0 for d in self.deltas):
            raise ValueError("deltas must be nonnegative")
        if any(p <= 0 for p in self.p_totals):
            raise ValueError("p_totals must be positive")

    @property
    def budget(self):
        return OracleBudget(n_samples=self.oracle_samples)

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class TrialRecord:
    trial: int
    method: str
    delta: float
    target_db: float
    verdict: str
    power: float = np.inf
    certificates: np.ndarray = None
    wall_ms: float = None

    def __post_init__(self):
        if self.verdict == "feasible" and not np.isfinite(self.power):
            raise ValueError("feasible record without finite power")

    @property
    def max_cert_mse(self):
        return None if self.certificates is None else float(np.max(self.certificates))

    def row(self, timing=False):
        return (self.trial, self.method, _fmt(self.delta), _fmt(self.target_db), self.verdict,
                _fmt(self.power) if np.isfinite(self.power) else "",
                _fmt(self.max_cert_mse), _fmt(self.wall_ms) if timing else "")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


# -- trials -------------------------------------------------------------------------

def generate_trials(config):
    """Rayleigh channel estimates, one ``K x Nt`` matrix per trial.

    Entries are circular complex Gaussian with unit variance. Trial ``t``
    draws from its own child of ``SeedSequence(seed)``, so a trial's channel
    does not depend on the trial count.
    """
    if config.seed is None:
        raise ValueError("a seed is required")
    kids = np.random.SeedSequence(config.seed).spawn(config.trials)
    shape = (config.n_users, config.n_tx)
    out = []
    for ss in kids:
        rng = np.random.default_rng(ss)
        out.append((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0))
    return out


def _regions(config, H, delta):
    if config.uncertainty == "sphere":
        return tuple(make_spherical(embed_row(h), delta) for h in H)
    return tuple(make_interval(embed_row(h), np.full(2 * H.shape[1], delta)) for h in H)


def problem_for(config, H, method, delta, target_db):
    """Problem data for one method at one grid point.

    ``perfect-csi`` designs a linear precoder on the estimates as if they
    were exact, whatever ``delta``.
    """
    K = H.shape[0]
    gamma_db = np.full(K, float(target_db))
    targets = QoSTargets.from_sinr_db(gamma_db)
    if method == "perfect-csi":
        return ProblemData(H, config.sigma, targets)
    regions = _regions(config, H, delta)
    if method == "linear-robust":
        return ProblemData(H, config.sigma, targets, regions)
    if method == "thp-robust-order1":
        order = order_blast(H)
    else:
        order = order_weighted(H, targets.sinr, config.sigma)
    return ProblemData(H, config.sigma, targets, regions, mode="thp", ordering=order)


def _oracle_rng(config, trial, *tags):
    return np.random.default_rng([int(config.seed), int(trial), *(int(t) for t in tags)])


def run_point(config, trial, H, method, delta, target_db, tags=()):
    data = problem_for(config, H, method, delta, target_db)
    t0 = time.perf_counter()
    out = solve_power_min(data, rng=_oracle_rng(config, trial, *tags), budget=config.budget)
    wall = 1e3 * (time.perf_counter() - t0)
    if out.feasible:
        verdict = "feasible"
    elif out.status == "infeasible":
        verdict = "infeasible"
    else:
        verdict = "failed"
        log.warning("trial %d %s delta=%g target=%g: status %s", trial, method, delta, target_db,
                    out.status)
    power = out.power if out.design is not None else np.inf
    if verdict != "feasible":
        power = np.inf
    return TrialRecord(trial, method, float(delta), float(target_db), verdict, power,
                       out.certificates, wall)


def _sweep_trial(args):
    config, trial, H, points = args
    recs = []
    for mi, method in enumerate(config.methods):
        for j, (delta, target_db) in enumerate(points):
            recs.append(run_point(config, trial, H, method, delta, target_db, (mi, j)))
    return recs


def _map_trials(config, fn, jobs):
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(fn, jobs))
    else:
        parts = [fn(j) for j in jobs]
    return [r for part in parts for r in part]


def _sweep(config, points):
    chans = generate_trials(config)
    jobs = [(config, t, H, points) for t, H in enumerate(chans)]
    recs = _map_trials(config, _sweep_trial, jobs)
    recs.sort(key=lambda r: r.trial)
    return recs


def sweep_sinr(config):
    """All methods over the SINR target grid at the first ``delta``."""
    delta = config.deltas[0]
    return _sweep(config, [(delta, t) for t in config.targets_db])


def sweep_delta(config):
    """All methods over the ``delta`` grid at the first target."""
    target = config.targets_db[0]
    return _sweep(config, [(d, target) for d in config.deltas])


def summarize(records, axis, cap):
    """Feasibility fractions and common-feasible average powers.

    ``axis`` is ``"target_db"`` or ``"delta"``; trials feasible for every
    method at every grid value ``<= cap`` form the common set.
    """
    methods = list(dict.fromkeys(r.method for r in records))
    grid = sorted({getattr(r, axis) for r in records})
    trials = sorted({r.trial for r in records})
    table = {(r.trial, r.method, getattr(r, axis)): r for r in records}
    inside = [v for v in grid if v <= cap + 1e-12]
    common = [t for t in trials
              if all(table[t, m, v].verdict == "feasible" for m in methods for v in inside)]
    rows = []
    for m in methods:
        for v in grid:
            recs = [table[t, m, v] for t in trials]
            frac = np.mean([r.verdict == "feasible" for r in recs])
            sub = [table[t, m, v] for t in common]
            saturated = any(r.verdict != "feasible" for r in sub)
            avg = None if saturated or not sub else float(np.mean([r.power for r in sub]))
            r0 = recs[0]
            rows.append((m, _fmt(r0.target_db), _fmt(r0.delta), len(recs), _fmt(frac), len(common),
                         _fmt(avg), int(saturated)))
    return rows


# -- max delta / minimax ----------------------------------------------------------

def _maxdelta_trial(args):
    config, trial, H = args
    target = config.targets_db[0]
    rows = []
    for method in config.methods:
        if method == "perfect-csi":
            continue
        # only the region shape matters; rho replaces its radius
        base = config.deltas[0] if config.deltas[0] > 0 else 1.0
        data = problem_for(config, H, method, base, target)
        out = solve_max_delta(data)
        if out.cap_hit:
            log.warning("trial %d %s: max-delta bracket cap reached", trial, method)
        rows.append((trial, method, _fmt(target), _fmt(out.delta_max), _fmt(out.bracket[0]),
                     _fmt(out.bracket[1]), out.iterations, int(out.cap_hit),
                     int(out.lower_bound_only)))
    return rows


def run_maxdelta(config):
    """Per-trial largest feasible uncertainty size for each robust method."""
    chans = generate_trials(config)
    return _map_trials(config, _maxdelta_trial, [(config, t, H) for t, H in enumerate(chans)])


def _minimax_trial(args):
    config, trial, H = args
    delta = config.deltas[0]
    rows = []
    for mi, method in enumerate(config.methods):
        data = problem_for(config, H, method, delta, 0.0)
        for j, p in enumerate(config.p_totals):
            out = solve_minimax(data, p, rng=_oracle_rng(config, trial, mi, j), budget=config.budget)
            cert = None if out.certificates is None else float(np.max(out.certificates))
            rows.append((trial, method, _fmt(delta), _fmt(p), _fmt(out.zeta0),
                         _fmt(out.sqrt_bracket[0]), _fmt(out.sqrt_bracket[1]), out.iterations,
                         int(out.upper_failed), _fmt(cert)))
    return rows


def run_minimax(config):
    """Per-trial minimax MSE level for each method and power budget."""
    chans = generate_trials(config)
    return _map_trials(config, _minimax_trial, [(config, t, H) for t, H in enumerate(chans)])


# -- CSV ----------------------------------------------------------------------------

def write_csv(path_or_buf, header, rows):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def trial_rows(records, timing=False):
    return [r.row(timing) for r in records]


def records_csv(records, timing=False):
    buf = io.StringIO()
    write_csv(buf, TRIAL_HEADER, trial_rows(records, timing))
    return buf.getvalue()


# -- config files -----------------------------------------------------------------

_TUPLE_FIELDS = {"deltas": float, "targets_db": float, "p_totals": float, "methods": str}


def _coerce(name, text):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ValueError(f"unknown config key {name!r}")
    if name in _TUPLE_FIELDS:
        conv = _TUPLE_FIELDS[name]
        return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
    if name == "timing":
        return text.strip().lower() in ("1", "true", "yes", "on")
    if name in ("uncertainty",):
        return text.strip()
    if name in ("sigma", "sinr_cap_db", "delta_cap"):
        return float(text)
    return int(text)


def parse_config_text(text):
    """``key = value`` lines (``#`` comments, comma-separated lists) to a dict."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    cp.read_string("[config]\n" + text)
    return {k.replace("-", "_"): _coerce(k.replace("-", "_"), v) for k, v in cp["config"].items()}


def load_config(path, **overrides):
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
