"""Command-line front door.

Every subcommand reads one section of a JSON config (unknown keys are
errors), writes ``results.csv`` and ``manifest.json`` to ``--out`` and exits
with 0 (all checks pass), 1 (a scientific check failed), 2 (budget
exhausted) or 64 (bad configuration).
"""
from __future__ import annotations

import argparse
import cmath
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

from . import __version__
from . import combinatorics as comb
from .gaussian import RngStream
from .kernels import (
    InadmissibleError,
    ModelParams,
    comparator_Cprime,
    decay_params,
    theorem1_bound,
    theorem2_bound,
)
from .lattice import LatticeSpec, check_lemma1
from .lve_engine import BudgetExhausted, EvalBudget, lemma4_check, pressure, two_point
from .oracle import OracleError, TinyModel, oracle_two_point_quadrature, oracle_two_point_sigma

EXIT_OK, EXIT_FAIL, EXIT_BUDGET, EXIT_CONFIG = 0, 1, 2, 64


class ConfigError(ValueError):
    pass


def csv_columns() -> list[str]:
    schema = json.loads(resources.files("lvelab").joinpath("data/csv_schema.json").read_text())
    return [c["name"] for c in schema["columns"]]


# ---------------------------------------------------------------------------
# configuration

DEFAULTS: dict[str, dict] = {
    "lattice": {"spacing": 0.25, "half_length": 16.0, "boundary": "dirichlet"},
    "budget": {"s_nodes": 8, "outer_samples": 2000, "inner_samples": [200, 2], "branch_samples": 1,
               "max_order": 2, "max_leaf_rows": None},
    "combinatorics": {"lemma2_N": 8, "lemma2_n": 6, "lemma3_n": 14, "gf_x": [0.1, 0.2], "gf_n_max": 20,
                      "table_n_max": 10, "ballot_table_file": None},
    "bounds": {"lambdas": [0.0, 0.02, 0.05, 0.1, 0.125], "re_m2": [1.0], "separations": [0.0, 0.5, 1.0, 2.0, 4.0]},
    "two_point": {"lambdas": [0.02, 0.05, 0.1], "m2": [1.0, 0.0], "separations": [0.0, 1.0, 2.0], "n_max": 2},
    "pressure": {"lambdas": [0.0, 0.05, 0.125], "m2": [1.0, 0.0], "n_max": 2},
    "resolvent_check": {"draws": 200, "t": 1.0, "m2_phases": [0.0, 1.0, 1.4], "lambdas": [0.05, 0.125]},
    "oracle_compare": {"spacing": 1.0, "half_length": 3.0, "m2": 1.0, "lambdas": [0.02, 0.05],
                       "pairs": [[2, 3], [2, 2], [1, 4]], "sigma_samples": 200000, "n_max": 2},
    "lemma_checks": {"spacing": 0.25, "half_length": 4.0, "m2": [1.0, 0.0], "lam": 0.125, "orders": [0, 1],
                     "t": 1.0, "fields": 20},
}


def _merge(section: str, given: dict | None) -> dict:
    base = dict(DEFAULTS[section])
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(given) - set(base)
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    base.update(given)
    return base


def load_config(path: str | Path | None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return {name: _merge(name, raw.get(name)) for name in DEFAULTS}


def _lattice(cfg: dict) -> LatticeSpec:
    try:
        return LatticeSpec(float(cfg["spacing"]), float(cfg["half_length"]), cfg.get("boundary", "dirichlet"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lattice: {exc}") from exc


def _budget(cfg: dict) -> EvalBudget:
    try:
        return EvalBudget(int(cfg["s_nodes"]), int(cfg["outer_samples"]), tuple(cfg["inner_samples"]),
                          int(cfg["branch_samples"]), int(cfg["max_order"]), cfg["max_leaf_rows"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad budget: {exc}") from exc


def _m2(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2:
        return complex(value[0], value[1])
    raise ConfigError(f"m2 must be a number or [re, im], got {value!r}")


# ---------------------------------------------------------------------------
# rows


@dataclass
class Context:
    config: dict
    seed: int
    threads: int
    rows: list

    def add(self, **fields):
        row = {c: "" for c in csv_columns()}
        row.update(seed=self.seed)
        for k, v in fields.items():
            if k not in row:
                raise KeyError(f"no CSV column {k!r}")
            row[k] = v
        if row["budget"] == "" or row["spec"] == "":
            raise ValueError(f"row {row['quantity']!r} lacks budget/spec provenance")
        self.rows.append(row)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _value_fields(z) -> dict:
    z = complex(z)
    return {"value_re": z.real, "value_im": z.imag}


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify_combinatorics(ctx: Context) -> int:
    cfg = ctx.config["combinatorics"]

    def add(**fields):
        ctx.add(subcommand="verify-combinatorics", budget="exact", spec="exact", **fields)

    ok = True
    n_tab = int(cfg["table_n_max"])
    if cfg["ballot_table_file"]:
        b = comb.BallotTable.from_json(Path(cfg["ballot_table_file"]).read_text())
        a = comb.catalan_table(b.n_max)
        fail = comb.first_lemma3_failure(b, a)
        ok &= fail is None
        where = "none" if fail is None else f"n={fail[0]};m={fail[1]}"
        add(case=f"ballot_table_file;first_failure={where}",
                quantity="lemma3_table_file", passes=fail is None)
        if fail is not None:
            print(f"ballot recursion fails at (n, m) = {fail}", file=sys.stderr)
    fast, slow = comb.ballot_table(n_tab), comb.ballot_table(n_tab, method="enumerate")
    ok &= fast == slow
    add(case=f"n_max={n_tab}", quantity="ballot_paths_agree", passes=fast == slow)
    lemma2_ok = True
    for N in range(int(cfg["lemma2_N"]) + 1):
        for n1 in range(int(cfg["lemma2_n"]) + 1):
            for n2 in range(int(cfg["lemma2_n"]) + 1):
                if not comb.check_lemma2(N, n1, n2):
                    lemma2_ok = False
                    print(f"subset-sum identity fails at (N, n1, n2) = {(N, n1, n2)}", file=sys.stderr)
                    add(case=f"N={N};n1={n1};n2={n2}", quantity="lemma2",
                            passes=False)
    add(case=f"N<={cfg['lemma2_N']};n<={cfg['lemma2_n']}",
            quantity="lemma2_all", passes=lemma2_ok)
    ok &= lemma2_ok
    n3 = int(cfg["lemma3_n"])
    b = comb.ballot_table(n3)
    fail = comb.first_lemma3_failure(b, comb.catalan_table(n3))
    ok &= fail is None
    if fail is not None:
        print(f"ballot recursion fails at (n, m) = {fail}", file=sys.stderr)
    add(case=f"n<={n3}", quantity="lemma3_all", passes=fail is None)
    n_gf = int(cfg["gf_n_max"])
    for x in cfg["gf_x"]:
        tail = comb.geometric_tail(float(x), n_gf)
        for m in (None, 1, 2, 3):
            res = comb.gf_residual(float(x), n_gf, m)
            good = res <= tail
            ok &= good
            add(case=f"x={x};m={'catalan' if m is None else m}",
                    quantity="gf_residual", value_re=res, bound=tail, margin=tail - res, passes=good)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bounds(ctx: Context) -> int:
    cfg = ctx.config["bounds"]
    for M in cfg["re_m2"]:
        for lam in cfg["lambdas"]:
            p = ModelParams(float(M), float(lam))
            flag = p.admissible(1.0)
            common = dict(subcommand="bounds", lam=float(lam), m2_re=float(M), m2_im=0.0,
                          budget="exact", spec="continuum")
            if not flag:
                ctx.add(case="inadmissible", quantity="admissible", passes=False, **common)
                continue
            c = decay_params(p).c
            ctx.add(case="", quantity="admissible", passes=True, **common)
            ctx.add(case="", quantity="decay_rate", value_re=math.sqrt(c * p.re_m2), **common)
            ctx.add(case="", quantity="theorem2_bound", value_re=theorem2_bound(p), **common)
            for sep in cfg["separations"]:
                ctx.add(case="", quantity="theorem1_bound", separation=float(sep),
                        value_re=theorem1_bound(p, 0.0, float(sep)), **common)
                ctx.add(case="", quantity="comparator", separation=float(sep),
                        value_re=comparator_Cprime(p, 0.0, float(sep)), **common)
    return EXIT_OK


def cmd_two_point(ctx: Context) -> int:
    cfg = ctx.config["two_point"]
    spec = _lattice(ctx.config["lattice"])
    budget = _budget(ctx.config["budget"])
    m2 = _m2(cfg["m2"])
    ok = True
    root = RngStream(ctx.seed, (1,))
    for i, lam in enumerate(cfg["lambdas"]):
        p = ModelParams(m2, float(lam))
        for j, sep in enumerate(cfg["separations"]):
            y1, y2 = spec.centered_pair(float(sep))
            res = two_point(p, spec, y1, y2, int(cfg["n_max"]), budget, root.child(i, j), ctx.threads)
            chk = res.bound_check
            ok &= chk.passes
            est = res.partial_sum
            ctx.add(subcommand="two-point", case=f"y1={y1};y2={y2}", quantity="partial_sum", lam=float(lam),
                    m2_re=m2.real, m2_im=m2.imag, separation=spec.coords[y2] - spec.coords[y1],
                    n_max=int(cfg["n_max"]), std_err=est.std_err, bound=chk.bound, tail=chk.tail,
                    margin=chk.margin, passes=chk.passes, budget=budget.describe(), spec=spec.describe(),
                    **_value_fields(est.mean))
            for n, term in enumerate(res.terms):
                ctx.add(subcommand="two-point", case=f"y1={y1};y2={y2}", quantity=f"term_{n}", lam=float(lam),
                        m2_re=m2.real, m2_im=m2.imag, separation=spec.coords[y2] - spec.coords[y1], n_max=n,
                        std_err=term.std_err, budget=budget.describe(), spec=spec.describe(),
                        **_value_fields(term.mean))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_pressure(ctx: Context) -> int:
    cfg = ctx.config["pressure"]
    spec = _lattice(ctx.config["lattice"])
    budget = _budget(ctx.config["budget"])
    m2 = _m2(cfg["m2"])
    ok = True
    root = RngStream(ctx.seed, (2,))
    for i, lam in enumerate(cfg["lambdas"]):
        p = ModelParams(m2, float(lam))
        res = pressure(p, spec, int(cfg["n_max"]), budget, root.child(i), ctx.threads)
        chk = res.bound_check
        ok &= chk.passes and res.x_independent
        common = dict(subcommand="pressure", lam=float(lam), m2_re=m2.real, m2_im=m2.imag, n_max=int(cfg["n_max"]),
                      budget=budget.describe(), spec=spec.describe())
        ctx.add(case=f"x={res.site}", quantity="pressure", std_err=res.estimate.std_err, bound=chk.bound,
                tail=chk.tail, margin=chk.margin, passes=chk.passes, **_value_fields(res.estimate.mean), **common)
        for site, est in res.other_sites:
            ctx.add(case=f"x={site}", quantity="pressure_other_site", std_err=est.std_err,
                    passes=res.x_independent, **_value_fields(est.mean), **common)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_resolvent_check(ctx: Context) -> int:
    cfg = ctx.config["resolvent_check"]
    spec = _lattice(ctx.config["lattice"])
    ok = True
    draws, t = int(cfg["draws"]), float(cfg["t"])
    root = RngStream(ctx.seed, (3,))
    for i, theta in enumerate(cfg["m2_phases"]):
        for j, lam in enumerate(cfg["lambdas"]):
            p = ModelParams(cmath.exp(1j * float(theta)), float(lam))
            sig = math.sqrt(t / spec.spacing) * root.child(i, j).normal((draws, spec.n_sites))
            worst = -math.inf
            for k in range(0, draws, 50):
                worst = max(worst, check_lemma1(spec, p, sig[k:k + 50]).max_violation)
            good = worst <= 1e-9
            ok &= good
            ctx.add(subcommand="resolvent-check", case=f"theta={theta};draws={draws}", quantity="lemma1_max_violation",
                    lam=float(lam), m2_re=p.m2.real, m2_im=p.m2.imag, value_re=worst, bound=1e-9,
                    margin=1e-9 - worst, passes=good, budget=f"draws={draws};t={t:g}",
                    spec=spec.describe())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle_compare(ctx: Context) -> int:
    cfg = ctx.config["oracle_compare"]
    spec = LatticeSpec(float(cfg["spacing"]), float(cfg["half_length"]))
    budget = _budget(ctx.config["budget"])
    m2 = float(cfg["m2"])
    ok = True
    root = RngStream(ctx.seed, (4,))
    for i, lam in enumerate(cfg["lambdas"]):
        p = ModelParams(m2, float(lam))
        model = TinyModel(spec, p)
        for j, (y1, y2) in enumerate(cfg["pairs"]):
            quad = oracle_two_point_quadrature(model, float(lam), y1, y2)
            sig = oracle_two_point_sigma(spec, p, y1, y2, int(cfg["sigma_samples"]), root.child(i, j, 0)).ratio
            lve = two_point(p, spec, y1, y2, int(cfg["n_max"]), budget, root.child(i, j, 1), ctx.threads)
            est = lve.partial_sum
            gap = abs(est.mean - quad.value)
            allow = lve.tail + 3.0 * est.std_err + 1e-12
            oracles_gap = abs(sig.mean - quad.value)
            oracles_allow = 3.0 * sig.std_err + 1e-12
            ok &= gap <= allow and oracles_gap <= oracles_allow
            common = dict(subcommand="oracle-compare", case=f"y1={y1};y2={y2}", lam=float(lam), m2_re=m2, m2_im=0.0,
                          separation=float(spec.coords[y2] - spec.coords[y1]), spec=spec.describe())
            ctx.add(quantity="oracle_quadrature", value_re=quad.value, budget=f"nodes={quad.nodes}", **common)
            ctx.add(quantity="oracle_sigma", std_err=sig.std_err, bound=quad.value, margin=oracles_allow - oracles_gap,
                    passes=oracles_gap <= oracles_allow, budget=f"sigma_samples={cfg['sigma_samples']}",
                    **_value_fields(sig.mean), **common)
            ctx.add(quantity="lve_partial_sum", std_err=est.std_err, n_max=int(cfg["n_max"]), bound=quad.value,
                    tail=lve.tail, margin=allow - gap, passes=gap <= allow, budget=budget.describe(),
                    **_value_fields(est.mean), **common)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_lemma_checks(ctx: Context) -> int:
    cfg = ctx.config["lemma_checks"]
    spec = LatticeSpec(float(cfg["spacing"]), float(cfg["half_length"]))
    budget = _budget(ctx.config["budget"])
    p = ModelParams(_m2(cfg["m2"]), float(cfg["lam"]))
    ok = True
    root = RngStream(ctx.seed, (5,))
    for n in cfg["orders"]:
        rep = lemma4_check(p, spec, int(n), float(cfg["t"]), budget, root.child(int(n)),
                           n_fields=int(cfg["fields"]), threads=ctx.threads)
        ok &= rep.holds
        for k, (v, e) in enumerate(zip(rep.values, rep.std_errs)):
            allow = rep.bound + 3.0 * e + 1e-12
            ctx.add(subcommand="lemma-checks", case=f"field={k}", quantity=f"lemma4_n{n}", lam=p.lam,
                    m2_re=p.m2.real, m2_im=p.m2.imag, value_re=v, std_err=e, bound=rep.bound,
                    margin=allow - v, passes=v <= allow, budget=budget.describe(), spec=spec.describe())
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS: dict[str, Callable[[Context], int]] = {
    "verify-combinatorics": cmd_verify_combinatorics,
    "bounds": cmd_bounds,
    "two-point": cmd_two_point,
    "pressure": cmd_pressure,
    "resolvent-check": cmd_resolvent_check,
    "oracle-compare": cmd_oracle_compare,
    "lemma-checks": cmd_lemma_checks,
}


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=csv_columns(), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _code_version() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def run(command: str, config: dict, seed: int, threads: int, out: Path) -> int:
    ctx = Context(config, seed, threads, [])
    start = time.perf_counter()
    try:
        code = COMMANDS[command](ctx)
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        code = EXIT_BUDGET
    except (InadmissibleError, OracleError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        code = EXIT_FAIL
    wall = time.perf_counter() - start
    text = render_csv(ctx.rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(text)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "threads": threads,
        "code_version": _code_version(),
        "budget": config["budget"],
        "wall_time_s": wall,
        "exit_code": code,
        "results_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvelab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON config (sections per subcommand)")
        p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        config = load_config(args.config)
        # surface malformed sections before any work starts
        _lattice(config["lattice"])
        _budget(config["budget"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, config, args.seed, args.threads, args.out)


if __name__ == "__main__":
    sys.exit(main())
