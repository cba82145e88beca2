"""Command line entry point: ``robust-precoding <command> ...``."""
import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .design import certify, solve_power_min
from .formulations import ProblemData
from .metrics import Design, QoSTargets
from .thp import ConstellationSpec, simulate
from .uncertainty import OracleBudget

log = logging.getLogger("robust_precoding")

# flag name -> ExperimentConfig field
_CONFIG_FLAGS = {
    "nt": "n_tx", "k": "n_users", "trials": "trials", "seed": "seed", "deltas": "deltas",
    "targets_db": "targets_db", "p_totals": "p_totals", "methods": "methods",
    "uncertainty": "uncertainty", "workers": "workers", "sigma": "sigma",
    "sinr_cap_db": "sinr_cap_db", "delta_cap": "delta_cap", "oracle_samples": "oracle_samples",
}


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _experiment_args(p):
    p.add_argument("--config", help="key = value file mirroring the experiment fields")
    p.add_argument("--seed", type=int, help="root seed (required)")
    p.add_argument("--nt", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--deltas", type=_floats, help="comma separated")
    p.add_argument("--targets-db", dest="targets_db", type=_floats, help="comma separated")
    p.add_argument("--p-totals", dest="p_totals", type=_floats, help="comma separated")
    p.add_argument("--methods", type=_names, help=f"subset of {','.join(ex.METHODS)}")
    p.add_argument("--uncertainty", choices=("sphere", "interval"))
    p.add_argument("--workers", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sinr-cap-db", dest="sinr_cap_db", type=float)
    p.add_argument("--delta-cap", dest="delta_cap", type=float)
    p.add_argument("--oracle-samples", dest="oracle_samples", type=int)
    p.add_argument("--timing", action="store_true", help="fill wall_ms (breaks byte reproducibility)")
    p.add_argument("--out", default="-", help="per-trial CSV path, '-' for stdout")
    p.add_argument("--summary", help="plot-data CSV path")


def _config_from(args):
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = ex.parse_config_text(fh.read())
    for flag, name in _CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    if args.timing:
        values["timing"] = True
    if values.get("seed") is None:
        raise SystemExit("error: --seed is required (directly or in --config)")
    return ex.ExperimentConfig(**values)


def _write(path, header, rows):
    if path in (None, "-"):
        ex.write_csv(sys.stdout, header, rows)
    else:
        ex.write_csv(path, header, rows)


# -- single-instance helpers ----------------------------------------------------------

def _load_channel(path):
    """``.npy`` complex matrix, or text with one user per line (Python complex literals)."""
    if path.endswith(".npy"):
        return np.atleast_2d(np.load(path))
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([complex(x.replace("i", "j")) for x in line.replace(",", " ").split()])
    return np.array(rows, dtype=complex)


def _channel(args):
    if args.channel:
        return _load_channel(args.channel)
    rng = np.random.default_rng(args.seed)
    shape = (args.k, args.nt)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _single_args(p):
    p.add_argument("--channel", help=".npy or text file with one channel row per user")
    p.add_argument("--seed", type=int, default=0, help="draws a Rayleigh channel when --channel is absent")
    p.add_argument("--nt", type=int, default=3)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--target-db", dest="target_db", type=float, default=6.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--uncertainty", choices=("sphere", "interval"), default="sphere")
    p.add_argument("--method", choices=ex.METHODS, default="linear-robust")


def _problem(args, H):
    cfg = ex.ExperimentConfig(n_tx=H.shape[1], n_users=H.shape[0], seed=args.seed,
                              sigma=args.sigma, uncertainty=args.uncertainty)
    return ex.problem_for(cfg, H, args.method, args.delta, args.target_db)


def save_design(path, design, data):
    d = data.ordered()
    np.savez(path, P=design.P, B=design.B, g=design.g, H=d.H, sigma=d.sigma, zeta=d.targets.zeta,
             ordering=np.array(data.ordering))


def load_design(path):
    z = np.load(path)
    return Design(z["P"], z["B"], z["g"]), z


def cmd_design(args):
    H = _channel(args)
    data = _problem(args, H)
    out = solve_power_min(data, method=args.formulation, rng=np.random.default_rng(args.seed))
    report = {"status": out.status, "feasible": out.feasible, "power": out.power,
              "ordering": list(out.ordering), "formulation": out.formulation,
              "zeta": out.zeta.tolist(),
              "certificates": None if out.certificates is None else out.certificates.tolist()}
    print(json.dumps(report, indent=2))
    if out.design is not None and args.save:
        save_design(args.save, out.design, data)
    return 0 if out.feasible else 1


def cmd_verify(args):
    design, z = load_design(args.design)
    H = z["H"]
    sigma = z["sigma"]
    targets = QoSTargets(z["zeta"])
    cfg = ex.ExperimentConfig(n_tx=H.shape[1], n_users=H.shape[0], seed=args.seed,
                              uncertainty=args.uncertainty)
    data = ProblemData(H, sigma, targets, ex._regions(cfg, H, args.delta))
    cert = certify(design, data, np.random.default_rng(args.seed),
                   OracleBudget(n_samples=args.oracle_samples))
    ok = bool(np.all(cert <= targets.zeta + args.tol))
    for k, (c, t) in enumerate(zip(cert, targets.zeta)):
        print(f"user {k}: worst-case MSE {c:.8g} target {t:.8g} {'pass' if c <= t + args.tol else 'FAIL'}")
    return 0 if ok else 1


def cmd_simulate(args):
    design, z = load_design(args.design)
    H = z["H"]
    if args.channel_error > 0:
        rng = np.random.default_rng([args.seed, 1])
        E = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
        E *= args.channel_error / np.linalg.norm(E, axis=1, keepdims=True)
        H = H + E
    rep = simulate(design, H, z["sigma"], args.symbols, ConstellationSpec(args.qam), args.seed,
                   workers=args.workers)
    header = ("user", "mse", "analytic_mse", "sinr", "ser", "v_variance")
    rows = [tuple(ex._fmt(r[h]) if h != "user" else r[h] for h in header) for r in rep.as_rows()]
    _write(args.out, header, rows)
    print(f"# tx_power {rep.tx_power:.8g} symbols {rep.n_symbols} seed {rep.seed}", file=sys.stderr)
    return 0


def cmd_sweep(args, kind):
    cfg = _config_from(args)
    recs = ex.sweep_sinr(cfg) if kind == "sinr" else ex.sweep_delta(cfg)
    _write(args.out, ex.TRIAL_HEADER, ex.trial_rows(recs, cfg.timing))
    if args.summary:
        axis, cap = ("target_db", cfg.sinr_cap_db) if kind == "sinr" else ("delta", cfg.delta_cap)
        _write(args.summary, ex.SUMMARY_HEADER, ex.summarize(recs, axis, cap))
    return 0


def cmd_maxdelta(args):
    cfg = _config_from(args)
    _write(args.out, ex.MAXDELTA_HEADER, ex.run_maxdelta(cfg))
    return 0


def cmd_minimax(args):
    cfg = _config_from(args)
    _write(args.out, ex.MINIMAX_HEADER, ex.run_minimax(cfg))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="robust-precoding",
                                 description="Robust linear and THP downlink precoding under MSE targets.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="minimum-power robust design for one channel")
    _single_args(p)
    p.add_argument("--formulation", choices=("auto", "exact", "conservative"), default="auto")
    p.add_argument("--save", help="write the design to this .npz")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("verify", help="worst-case MSE certificates of a saved design")
    p.add_argument("design")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--uncertainty", choices=("sphere", "interval"), default="sphere")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-samples", dest="oracle_samples", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="symbol-level simulation of a saved design")
    p.add_argument("design")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symbols", type=int, default=100_000)
    p.add_argument("--qam", type=int, default=64)
    p.add_argument("--channel-error", dest="channel_error", type=float, default=0.0,
                   help="norm of a random per-user channel error")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    for name, kind in (("sweep-sinr", "sinr"), ("sweep-delta", "delta")):
        p = sub.add_parser(name, help=f"feasibility and power versus {kind}")
        _experiment_args(p)
        p.set_defaults(func=lambda a, kind=kind: cmd_sweep(a, kind))

    p = sub.add_parser("maxdelta", help="largest feasible uncertainty per trial")
    _experiment_args(p)
    p.set_defaults(func=cmd_maxdelta)

    p = sub.add_parser("minimax", help="minimax MSE per trial and power budget")
    _experiment_args(p)
    p.set_defaults(func=cmd_minimax)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
