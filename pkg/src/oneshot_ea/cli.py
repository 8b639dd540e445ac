"""Command-line entry point ``oneshot-ea``.

Subcommands: ``entropy``, ``bounds``, ``asymptotic``, ``sweep-n``,
``decouple`` and ``check``.  Structured results go to stdout as one JSON
line; sweeps are CSV.  Floats carry 12 significant digits.

Exit codes: 0 success, 1 a property check failed, 2 invalid input, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import capacity as cap
from . import decoupling as dec
from . import entropy as en
from . import lemmas
from .channels import channel_from_json, tensor_power
from .errors import LayoutError, OneShotError, SolverError
from .mathcore import SystemLayout
from .states import DensityOperator, as_density, state_from_json

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
SUITES = ("appendix-a", "lemmas")


@dataclass
class RunConfig:
    """Everything a run depends on; serializes to JSON and rejects unknown keys."""

    command: str
    channel: str | None = None
    state: str | None = None
    input: str | None = None
    split: str | None = None
    kind: str | None = None
    mode: str | None = None
    eps: float | None = None
    seed: int = 0
    budget: int = 200
    trials: int = 100
    nmax: int = 3
    optimize: bool = False
    kappa_compat: bool = False
    suite: str = "appendix-a"
    quick: bool = False
    a0: int = 2
    a1: int = 2
    uses: int | None = None
    jobs: int = 1
    tol: float | None = None
    output: str = "json"
    summary: str | None = None

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        vals = {k: v for k, v in vars(ns).items() if k in known}
        return cls(**vals)


# --------------------------------------------------------------------------
# output helpers


def _fmt(x):
    """Recursively round floats to 12 significant digits; non-finite become strings."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    return x


def _emit_json(obj, out) -> None:
    out.write(json.dumps(_fmt(obj), sort_keys=True) + "\n")


def _csv_cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(x)


def _emit_csv(header, rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(r[h]) for h in header])


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_channel(path: str):
    return channel_from_json(_load_json(path))


def _load_state(path: str):
    return state_from_json(_load_json(path))


def _channel_input(path: str | None, d: int) -> DensityOperator:
    lay = SystemLayout.of(("A'", d))
    if path is None:
        return DensityOperator(np.eye(d) / d, lay)
    rho = as_density(_load_state(path))
    if rho.dim != d:
        raise LayoutError(f"input state has dimension {rho.dim}, channel expects {d}")
    return DensityOperator(rho.matrix, lay)


# --------------------------------------------------------------------------
# commands


def _cmd_entropy(cfg: RunConfig, out) -> int:
    state = as_density(_load_state(cfg.state))
    split = cfg.split
    eps = 0.0 if cfg.eps is None else cfg.eps
    a, b = en.parse_split(split)
    kw = {} if cfg.tol is None else {"tol": cfg.tol}
    if cfg.kind == "hmin":
        res = en.h_min_smooth(state, (a, b), eps, **kw)
    elif cfg.kind == "hmax":
        res = en.h_max_cond(state, (a, b), **kw) if eps == 0 else en.h_max_smooth(state, (a, b), eps, **kw)
    elif cfg.kind == "vn":
        val = en.conditional_entropy(state, (a, b)) if b else en.von_neumann(state.reduce(list(a)))
        res = en.EntropyResult(val)
    elif cfg.kind == "mi":
        res = en.EntropyResult(en.mutual_information(state, (a, b)))
    else:
        raise ValueError(f"unknown entropy kind {cfg.kind!r}")
    payload = {"kind": cfg.kind, "split": split, **res.to_json()}
    _emit_json(payload, out)
    if res.validity == "solver_failure":
        return EXIT_SOLVER
    if res.validity == "smoothing_out_of_range":
        return EXIT_INVALID
    return EXIT_OK


def _cmd_bounds(cfg: RunConfig, out) -> int:
    ch = _load_channel(cfg.channel)
    if cfg.optimize:
        search, state = "optimize", None
    elif cfg.input is not None:
        search, state = "fixed", _channel_input(cfg.input, ch.dim_in)
    else:
        search, state = "maximally_mixed", None
    common = dict(input_search=search, input_state=state, budget=cfg.budget, seed=cfg.seed)
    if cfg.mode == "eaq":
        rep = cap.eaq_bounds(ch, cfg.eps, **common)
    elif cfg.mode == "eac":
        rep = cap.eac_bounds(ch, cfg.eps, kappa_compat=cfg.kappa_compat, **common)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")
    _emit_json(rep.to_json(), out)
    return EXIT_OK


def _cmd_asymptotic(cfg: RunConfig, out) -> int:
    ch = _load_channel(cfg.channel)
    c, q, st = cap.asymptotic_capacity(ch, budget=cfg.budget, seed=cfg.seed)
    _emit_json({"C_ea": c, "Q_ea": q, "argmax_input": st.to_json()}, out)
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, out) -> int:
    ch = _load_channel(cfg.channel)
    st = _channel_input(cfg.input, ch.dim_in)
    eps = 0.1 if cfg.eps is None else cfg.eps
    rows = cap.n_copy_trend(ch, st, eps, cfg.nmax, bounds=0 < eps < 1)
    header = ["n", "core_per_use", "mutual_information"]
    if rows and "lower_per_use" in rows[0]:
        header[2:2] = ["lower_per_use", "upper_per_use"]
    _emit_csv(header, rows, out)
    return EXIT_OK


def _cmd_decouple(cfg: RunConfig, out) -> int:
    ch = _load_channel(cfg.channel)
    uses = cfg.uses
    if uses is None:
        uses = 1
        while ch.dim_in ** uses < cfg.a0 * cfg.a1:
            uses += 1
    big = tensor_power(ch, uses)
    if cfg.input is None:
        st = DensityOperator(np.eye(big.dim_in) / big.dim_in)
    else:
        rho = as_density(_load_state(cfg.input)).matrix
        if rho.shape[0] == ch.dim_in and uses > 1:
            m = rho
            for _ in range(uses - 1):
                m = np.kron(m, rho)
            rho = m
        st = DensityOperator(rho)
    eps = 0.05 if cfg.eps is None else cfg.eps
    trials, summary = dec.run_experiment(big, st, eps, cfg.trials, cfg.seed, cfg.a0, cfg.a1,
                                         jobs=cfg.jobs)
    summary["channel_uses"] = uses
    out.write(dec.trials_to_csv(trials))
    if cfg.summary:
        with open(cfg.summary, "w", encoding="utf-8") as fh:
            _emit_json(summary, fh)
    else:
        out.write("# summary: ")
        _emit_json(summary, out)
    return EXIT_OK


def _cmd_check(cfg: RunConfig, out) -> int:
    if cfg.suite not in SUITES:
        raise ValueError(f"unknown suite {cfg.suite!r}; choose from {SUITES}")
    results = lemmas.run_suite(cfg.seed, quick=cfg.quick)
    for r in results:
        out.write(r.row() + "\n")
    ok = all(r.passed for r in results)
    out.write(f"{'ALL PASS' if ok else 'FAILURES'}: {sum(r.passed for r in results)}/{len(results)}\n")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {
    "entropy": _cmd_entropy,
    "bounds": _cmd_bounds,
    "asymptotic": _cmd_asymptotic,
    "sweep-n": _cmd_sweep,
    "decouple": _cmd_decouple,
    "check": _cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oneshot-ea", description=__doc__.splitlines()[0])
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent trials")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("entropy", help="entropic quantity of a state")
    s.add_argument("--state", required=True)
    s.add_argument("--split", required=True, help='e.g. "A;B", "A1,A2;B" or "A;"')
    s.add_argument("--kind", required=True, choices=["hmin", "hmax", "vn", "mi"])
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--tol", type=float)

    s = sub.add_parser("bounds", help="one-shot capacity bounds")
    s.add_argument("--channel", required=True)
    s.add_argument("--mode", required=True, choices=["eaq", "eac"])
    s.add_argument("--eps", type=float, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--input")
    g.add_argument("--optimize", action="store_true")
    s.add_argument("--budget", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kappa-compat", action="store_true")

    s = sub.add_parser("asymptotic", help="asymptotic entanglement-assisted capacities")
    s.add_argument("--channel", required=True)
    s.add_argument("--budget", type=int, default=1500)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep-n", help="per-use one-shot quantities for n channel uses")
    s.add_argument("--channel", required=True)
    s.add_argument("--input")
    s.add_argument("--nmax", type=int, default=3)
    s.add_argument("--eps", type=float, default=0.1)

    s = sub.add_parser("decouple", help="random-encoder decoupling experiment")
    s.add_argument("--channel", required=True)
    s.add_argument("--input")
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--a0", type=int, default=2)
    s.add_argument("--a1", type=int, default=2)
    s.add_argument("--uses", type=int, help="channel uses (default: fewest fitting |A0||A1|)")
    s.add_argument("--summary", help="write the JSON summary here instead of a trailing comment")

    s = sub.add_parser("check", help="seeded entropy-inequality property suite")
    s.add_argument("--suite", default="appendix-a", choices=SUITES)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--quick", action="store_true")
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig.from_args(ns)
    buf = io.StringIO()
    try:
        code = COMMANDS[cfg.command](cfg, buf)
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OneShotError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
