"""Command-line entry point.

    qbranch bounds --mode point-pair --n 2
    qbranch bell --theta 1.5707963 --replicas 10000 --seed 7 --out bell.json

Every run emits one JSON result document (stdout, or ``--out``) and, with
``--table``, a CSV table for plotting.  Settings come from flags, then from
a ``--config`` file of ``key = value`` lines, then from built-in defaults.
Exit codes: 0 success, 2 bad arguments, 3 cap exceeded, 4 no convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import CapExceededError, ConvergenceError, DomainError, QBranchError

EXIT_OK, EXIT_ARGS, EXIT_CAP, EXIT_CONVERGENCE = 0, 2, 3, 4

DEFAULTS = {
    "complexity": dict(sites=5, n=2, r=None, mode="pair", steps=None, restarts=1, seed=0),
    "bounds": dict(mode="point-pair", n=2, r=2, sites=None),
    "branch": dict(sites=5, n=2, r=None, b=0.1, oracle="surrogate", seed=0),
    "lie-closure": dict(sites=2, cap=2000),
    "stern-gerlach": dict(q=1.0, w=10.0, d=1.0, m=1.0, r=1.0, t1=1.0, b=1.0, spacing=0.1,
                          times="2,5,10,20,50"),
    "bell": dict(theta=float(np.pi / 2), q=1.0, w=10.0, d=1.0, m=1.0, replicas=10_000, seed=0),
}


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


# ---------------------------------------------------------------------------
# result document


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


@dataclass
class ResultDocument:
    command: str
    metadata: dict
    inputs: dict
    outputs: dict
    table: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = dict(command=self.command, metadata=self.metadata, inputs=self.inputs,
                   outputs=self.outputs, table=self.table)
        return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        d = json.loads(text)
        return cls(d["command"], d["metadata"], d["inputs"], d["outputs"], d.get("table", []))


# ---------------------------------------------------------------------------
# configuration


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ArgumentError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _coerce(value, default):
    if isinstance(default, str):
        return value
    typ = int if default is None else type(default)
    try:
        return typ(value)
    except ValueError:
        raise ArgumentError(f"cannot read {value!r} as {typ.__name__}")


def _settings(command: str, ns: argparse.Namespace) -> dict:
    defaults = {k.replace("-", "_"): v for k, v in DEFAULTS[command].items()}
    merged = dict(defaults)
    if ns.config:
        for k, v in read_config(ns.config).items():
            if k not in defaults:
                raise ArgumentError(f"unknown config key {k!r} for {command}")
            merged[k] = _coerce(v, defaults[k])
    for k in defaults:
        v = getattr(ns, k, None)
        if v is not None:
            merged[k] = v
    return merged


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qbranch", description="Lattice-fermion complexity and branching laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key = value settings file")
        sp.add_argument("--out", help="write the result document here instead of stdout")
        sp.add_argument("--table", help="write a CSV table here")
        return sp

    sp = common(sub.add_parser("complexity", help="optimize a trajectory to an entangled pair state"))
    sp.add_argument("--sites", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--mode", choices=["pair", "state"],
                    help="pair: from the product start state; state: to the nearest product state")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--seed", type=int)

    sp = common(sub.add_parser("bounds", help="analytic bounds and constructive trajectories"))
    sp.add_argument("--mode", choices=["point-pair", "extended"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--sites", type=int)

    sp = common(sub.add_parser("branch", help="branch decomposition of an entangled pair state"))
    sp.add_argument("--sites", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--b", type=float)
    sp.add_argument("--oracle", choices=["surrogate", "optimizer"])
    sp.add_argument("--seed", type=int)

    sp = common(sub.add_parser("lie-closure", help="dimension of the generated Lie algebra"))
    sp.add_argument("--sites", type=int)
    sp.add_argument("--cap", type=int)

    sp = common(sub.add_parser("stern-gerlach", help="Stern-Gerlach packet model"))
    for name in ("q", "w", "d", "m", "r", "t1", "b", "spacing"):
        sp.add_argument(f"--{name}", type=float)
    sp.add_argument("--times", help="comma-separated output times")

    sp = common(sub.add_parser("bell", help="Bell replica ensemble"))
    sp.add_argument("--theta", type=float, help="analyzer angle in radians")
    for name in ("q", "w", "d", "m"):
        sp.add_argument(f"--{name}", type=float)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--seed", type=int)
    return p


# ---------------------------------------------------------------------------
# commands


def _chain(sites, need):
    from .fock import LatticeGeometry

    sites = need if sites is None else sites
    if sites < need:
        raise DomainError(f"need at least {need} sites, got {sites}")
    return LatticeGeometry.chain(sites)


def _pair_target(geom, n, r):
    from .complexity import omega, omega_prime

    return omega(geom, n) if r is None else omega_prime(geom, n, r)


def cmd_complexity(s):
    from .complexity import (
        OptimizerConfig,
        build_extended_trajectory,
        build_point_pair_trajectory,
        complexity_of_state,
        cost,
        optimize_complexity,
        psi_upper_bound,
    )

    n, r = s["n"], s["r"]
    geom = _chain(s["sites"], n + (r or 1))
    target = _pair_target(geom, n, r)
    if s["restarts"] < 1:
        raise DomainError("restarts must be >= 1")
    if s["mode"] == "pair":
        traj = (build_point_pair_trajectory(n, geom) if r is None
                else build_extended_trajectory(n, r, geom))
        cfg = OptimizerConfig(steps=s["steps"], restarts=s["restarts"], seed=s["seed"],
                              warm_starts=(traj,))
        est = optimize_complexity(target, psi_upper_bound(geom), cfg)
        constructive = cost(traj)
    else:
        cfg = OptimizerConfig(steps=s["steps"], restarts=s["restarts"], seed=s["seed"])
        est = complexity_of_state(target, cfg)
        constructive = None
    out = dict(lower=est.lower, upper=est.upper, overlap=est.overlap, methods=dict(est.methods),
               constructive_cost=constructive, steps=len(est.witness))
    return out, []


def cmd_bounds(s):
    from .complexity import (
        angle_audit,
        build_extended_trajectory,
        build_point_pair_trajectory,
        cost,
        evolve,
        kappa,
        lambda_,
        lower_bound_extended,
        lower_bound_point_pair,
        omega,
        omega_prime,
        overlap,
        psi_upper_bound,
        upper_bound_extended,
        upper_bound_point_pair,
    )

    n, r = s["n"], s["r"]
    if s["mode"] == "point-pair":
        geom = _chain(s["sites"], n + 1)
        traj = build_point_pair_trajectory(n, geom)
        target = omega(geom, n)
        out = dict(lower=lower_bound_point_pair(n), upper=upper_bound_point_pair(n))
    else:
        geom = _chain(s["sites"], n + r)
        traj = build_extended_trajectory(n, r, geom)
        target = omega_prime(geom, n, r)
        out = dict(lower=lower_bound_extended(n, r), upper=upper_bound_extended(n, r),
                   kappa=kappa(r), lambda_=lambda_(r))
    start = psi_upper_bound(geom)
    audit = angle_audit(traj, start, target)
    out.update(constructive_cost=cost(traj), constructive_overlap=overlap(evolve(traj, start), target),
               audit_lower=audit.lower_bound, audit_angles=audit.per_cut)
    table = [dict(cut=p, angle=a, endpoint=e) for p, (a, e) in enumerate(zip(audit.per_cut, audit.endpoint))]
    return out, table


def cmd_branch(s):
    from .branching import SearchConfig, optimize_branches, q_value

    n, r = s["n"], s["r"]
    geom = _chain(s["sites"], n + (r or 1))
    psi = _pair_target(geom, n, r)
    oracle = s["oracle"]
    if oracle == "optimizer":
        from .branching import optimizer_oracle
        from .complexity import OptimizerConfig

        oracle = optimizer_oracle(OptimizerConfig(restarts=1, seed=s["seed"]))
    dec = optimize_branches(psi, s["b"], oracle=oracle, config=SearchConfig(seed=s["seed"]))
    table = [dict(branch=i, weight=w, complexity=c, support=len(sup))
             for i, (w, c, sup) in enumerate(zip(dec.weights, dec.complexities, dec.supports()))]
    out = dict(branches=len(dec.branches), weights=dec.weights, complexities=dec.complexities,
               q=q_value(dec), entropy=dec.entropy, mean_complexity=dec.mean_complexity)
    return out, table


def cmd_lie_closure(s):
    from .opspace import lie_closure

    geom = _chain(s["sites"], 2)
    rep = lie_closure(geom, cap=s["cap"])
    out = dict(dimension=rep.closure_dimension, expected=rep.expected_dimension,
               generators=rep.generator_count, center_rank=rep.center_rank,
               sectors=rep.sectors, sector_dims=rep.sector_dims, passed=rep.passed)
    return out, [dict(n=n, d=d) for n, d in zip(rep.sectors, rep.sector_dims)]


def cmd_stern_gerlach(s):
    from .experiments import SternGerlachConfig, stern_gerlach_run

    try:
        times = tuple(float(t) for t in str(s["times"]).split(","))
    except ValueError:
        raise ArgumentError(f"cannot parse times {s['times']!r}")
    cfg = SternGerlachConfig(q=s["q"], w=s["w"], d=s["d"], m=s["m"], r=s["r"], t1=s["t1"],
                             b=s["b"], spacing=s["spacing"], schedule=times)
    rep = stern_gerlach_run(cfg)
    out = dict(status=rep.status, separable=rep.separable, branch_time=rep.branch_time,
               threshold=rep.threshold, weights=rep.weights,
               branches=[dict(sign=b.sign, weight=b.weight, spins=b.spins) for b in rep.final_branches])
    return out, rep.table()


def cmd_bell(s):
    from .experiments import BellConfig, bell_ensemble, bell_single

    cfg = BellConfig(theta=s["theta"], q=s["q"], w=s["w"], d=s["d"], m=s["m"],
                     replicas=s["replicas"], seed=s["seed"])
    res = bell_ensemble(cfg)
    single = bell_single(cfg.theta)
    counts = res.counts()
    out = dict(correlation=res.correlation, stderr=res.stderr, expected=res.expected,
               agree=res.agree, disagree=res.disagree, counts=counts,
               weights=dict(zip(single.labels, single.weights)))
    table = [dict(branch=lab, weight=w, count=counts[lab]) for lab, w in zip(single.labels, single.weights)]
    return out, table


COMMANDS = {
    "complexity": cmd_complexity,
    "bounds": cmd_bounds,
    "branch": cmd_branch,
    "lie-closure": cmd_lie_closure,
    "stern-gerlach": cmd_stern_gerlach,
    "bell": cmd_bell,
}


def _write_table(path, rows):
    if not rows:
        rows = [{}]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})


def run(argv=None, stdout=None, stderr=None):
    """Parse ``argv``, dispatch, and return ``(exit_status, ResultDocument or None)``."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
        settings = _settings(ns.command, ns)
        outputs, table = COMMANDS[ns.command](settings)
    except ArgumentError as e:
        print(f"qbranch: argument error: {e}", file=stderr)
        return EXIT_ARGS, None
    except DomainError as e:
        print(f"qbranch: invalid parameters: {e}", file=stderr)
        return EXIT_ARGS, None
    except CapExceededError as e:
        print(f"qbranch: cap exceeded: {e}", file=stderr)
        return EXIT_CAP, None
    except ConvergenceError as e:
        print(f"qbranch: no convergence: {e}", file=stderr)
        return EXIT_CONVERGENCE, None
    except OSError as e:
        print(f"qbranch: {e}", file=stderr)
        return EXIT_ARGS, None
    except QBranchError as e:
        print(f"qbranch: {e}", file=stderr)
        return EXIT_CONVERGENCE, None
    meta = dict(version=__version__, seed=settings.get("seed"),
                timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    doc = ResultDocument(ns.command, meta, settings, outputs, table)
    text = doc.to_json()
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    if ns.table:
        _write_table(ns.table, table)
    return EXIT_OK, doc


def main(argv=None):
    try:
        status, _ = run(argv)
    except SystemExit as e:  # --help / --version
        status = e.code if isinstance(e.code, int) else 0
    sys.exit(status)


if __name__ == "__main__":
    main()
