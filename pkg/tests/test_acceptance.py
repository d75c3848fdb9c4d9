"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE C<k> PASS|FAIL`` line (visible even
under output capture) before asserting. Tolerances are pinned, not tuned.
The theorem-1 grid runs at the default budget and dominates the runtime.
"""
import cmath
import json
import math
import time

import numpy as np
import pytest

from lvelab import cli
from lvelab import combinatorics as comb
from lvelab import lve_engine as lve
from lvelab.gaussian import RngStream
from lvelab.kernels import ModelParams, covariance_C
from lvelab.lattice import LatticeSpec, check_lemma1, free_covariance
from lvelab.lve_engine import EvalBudget, WQuery
from lvelab.oracle import TinyModel, oracle_two_point_quadrature, oracle_two_point_sigma

SEED = 20240601
DEFAULT_LATTICE = LatticeSpec(0.25, 16.0)
SIGMA_K = 3.0


def report(capsys, k: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE C{k:02d} {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="module")
def theorem1_grid():
    """Two-point partial sums at the default budget over the full grid, with wall time."""
    budget = EvalBudget()
    spec = DEFAULT_LATTICE
    out = []
    start = time.perf_counter()
    for i, lam in enumerate((0.02, 0.05, 0.1)):
        for j, sep in enumerate((0.0, 1.0, 2.0)):
            y1, y2 = spec.centered_pair(sep)
            res = lve.two_point(ModelParams(1.0, lam), spec, y1, y2, 2, budget, RngStream(SEED, (5, i, j)))
            out.append((lam, sep, y1, y2, res))
    return out, time.perf_counter() - start


def test_c01_lemma2_exhaustive(capsys):
    start = time.perf_counter()
    bad = [(N, n1, n2) for N in range(9) for n1 in range(7) for n2 in range(7) if not comb.check_lemma2(N, n1, n2)]
    wall = time.perf_counter() - start
    ok = not bad and wall < 10.0
    report(capsys, 1, ok, f"lemma2 N<=8 n1,n2<=6 failures={len(bad)} wall={wall:.2f}s (<10s)")
    assert ok


def test_c02_lemma3_and_gf_residuals(capsys):
    a, b = comb.catalan_table(14), comb.ballot_table(14)
    rec_bad = [(n, m) for n in range(1, 15) for m in range(1, n + 1) if not comb.check_lemma3_recursion(n, m, (a, b))]
    worst = -math.inf
    for x in (0.1, 0.2):
        tail = comb.geometric_tail(x, 20)
        for m in (None, 1, 2, 3, 4):
            worst = max(worst, comb.gf_residual(x, 20, m) / tail)
    ok = not rec_bad and worst <= 1.0
    report(capsys, 2, ok, f"lemma3 failures={len(rec_bad)}; max residual/tail={worst:.3e} (<=1)")
    assert ok


def test_c03_lemma1_lattice(capsys):
    spec = LatticeSpec(0.25, 16.0)
    assert spec.n_sites == 128
    start = time.perf_counter()
    worst, violations = -math.inf, 0
    for i, theta in enumerate((0.0, 1.0, 1.4)):
        for j, lam in enumerate((0.05, 0.125)):
            p = ModelParams(cmath.exp(1j * theta), lam)
            sig = math.sqrt(1.0 / spec.spacing) * RngStream(SEED, (3, i, j)).normal((200, spec.n_sites))
            for k in range(0, 200, 50):
                rep = check_lemma1(spec, p, sig[k:k + 50])
                worst = max(worst, rep.max_violation)
                violations += not rep.holds
    wall = time.perf_counter() - start
    ok = violations == 0 and wall < 120.0
    report(capsys, 3, ok, f"max(|g|/g'-1)={worst:.3e} (<=1e-9) violations={violations} wall={wall:.1f}s (<120s)")
    assert ok


def test_c04_free_limit(capsys):
    details, ok = [], True
    for a, tol in ((0.25, 0.07), (0.0625, 0.005)):
        spec = LatticeSpec(a, 16.0)
        g = free_covariance(spec, 1.0)
        worst = 0.0
        for sep in (0.0, 1.0, 2.0, 3.0, 4.0):
            y1, y2 = spec.centered_pair(sep)
            res = lve.two_point(ModelParams(1.0, 0.0), spec, y1, y2, 2, EvalBudget(), RngStream(SEED, (4,)))
            est = res.partial_sum
            exact_lattice = est.std_err == 0.0 and est.mean == pytest.approx(g[y1, y2], rel=1e-12)
            c = covariance_C(1.0, spec.coords[y1], spec.coords[y2])
            rel = abs(est.mean - c) / c
            worst = max(worst, rel)
            ok &= exact_lattice and rel <= tol
        details.append(f"a={a}: max rel dev {worst:.4f} (<={tol})")
    report(capsys, 4, ok, "; ".join(details) + "; std_err=0")
    assert ok


def test_c05_theorem1(capsys, theorem1_grid):
    grid, wall = theorem1_grid
    fails = [(lam, sep) for lam, sep, _, _, res in grid if not res.bound_check.passes]
    tightest = min(res.bound_check.margin / res.bound_check.bound for *_, res in grid)
    ok = not fails and wall < 1800.0
    report(capsys, 5, ok, f"9 grid points, failures={fails}, min relative margin={tightest:.3f}, "
                          f"wall={wall / 60:.1f}min (<30min)")
    for lam, sep, y1, y2, res in grid:
        chk = res.bound_check
        with capsys.disabled():
            print(f"    lam={lam} sep={sep}: |S|={chk.value:.5f} +- {chk.std_err:.5f} "
                  f"bound={chk.bound:.5f} tail={chk.tail:.5f}")
    assert ok


@pytest.mark.parametrize("lam", [0.02, 0.05])
def test_c06_oracle_agreement(capsys, lam):
    spec = LatticeSpec(1.0, 3.0)
    assert spec.n_sites == 6
    p = ModelParams(1.0, lam)
    model = TinyModel(spec, p)
    ok, worst_lve, worst_orc = True, -math.inf, -math.inf
    for j, (y1, y2) in enumerate(((2, 3), (2, 2), (1, 4))):
        quad = oracle_two_point_quadrature(model, lam, y1, y2).value
        res = lve.two_point(p, spec, y1, y2, 2, EvalBudget(), RngStream(SEED, (6, j)))
        est = res.partial_sum
        gap = abs(est.mean - quad)
        allow = res.tail + SIGMA_K * est.std_err
        sig = oracle_two_point_sigma(spec, p, y1, y2, 200000, RngStream(SEED, (6, j, 1))).ratio
        ogap = abs(sig.mean - quad)
        oallow = SIGMA_K * sig.std_err
        worst_lve = max(worst_lve, gap / allow)
        worst_orc = max(worst_orc, ogap / oallow)
        ok &= gap <= allow and ogap <= oallow
    report(capsys, 6, ok, f"lam={lam}: max |LVE-quad|/(tail+3se)={worst_lve:.3f}; "
                          f"max |sigma-quad|/3se={worst_orc:.3f}")
    assert ok


def test_c07_parity(capsys, theorem1_grid):
    grid, _ = theorem1_grid
    worst_src = max(abs(res.partial_sum.mean.imag) / (SIGMA_K * res.partial_sum.std_err) for *_, res in grid)
    spec = DEFAULT_LATTICE
    site = spec.n_sites // 2
    budget = EvalBudget(outer_samples=256)
    worst_vac = 0.0
    for lam in (0.05, 0.1):
        for n in (0, 1):
            est = lve.eval_w(WQuery(n, "vacuum", (site,)), spec, ModelParams(1.0, lam), budget,
                             RngStream(SEED, (7, n)))
            worst_vac = max(worst_vac, abs(est.mean.real) / (SIGMA_K * est.std_err))
    ok = worst_src <= 1.0 and worst_vac <= 1.0
    report(capsys, 7, ok, f"max |Im S|/3se={worst_src:.3f}; max |Re W_vac|/3se={worst_vac:.3f} (n in 0,1)")
    assert ok


def test_c08_lemma5_first_order(capsys):
    spec = LatticeSpec(0.25, 4.0)
    assert spec.n_sites == 32
    p = ModelParams(1.0, 0.125)
    budget = EvalBudget(outer_samples=256)
    gen = np.random.default_rng(SEED)
    pairs = [tuple(int(v) for v in gen.choice(spec.n_sites, 2, replace=True)) for _ in range(10)]
    worst = 0.0
    for i, (y1, y2) in enumerate(pairs):
        q = WQuery(1, "source", (y1, y2))
        full = lve.eval_w(q, spec, p, budget, RngStream(SEED, (8, i, 0)))
        split = lve.lemma5_sum(q, spec, p, budget, RngStream(SEED, (8, i, 1)))
        worst = max(worst, abs(full.mean - split.mean) / (SIGMA_K * math.hypot(full.std_err, split.std_err)))
    ok = worst <= 1.0
    report(capsys, 8, ok, f"10 pairs {pairs}: max |W - sum_m W_m|/3se={worst:.3f}")
    assert ok


def test_c09_lemma4(capsys):
    spec = LatticeSpec(0.25, 4.0)
    p = ModelParams(1.0, 0.125)
    budget = EvalBudget(outer_samples=200)
    ok, parts = True, []
    for n in (0, 1):
        rep = lve.lemma4_check(p, spec, n, 1.0, budget, RngStream(SEED, (9, n)), n_fields=20)
        ok &= rep.holds
        parts.append(f"n={n}: max|W|={max(rep.values):.4f} bound={rep.bound:.4f}")
    report(capsys, 9, ok, "20 fields each; " + "; ".join(parts))
    assert ok


def test_c10_pressure(capsys):
    spec = DEFAULT_LATTICE
    budget = EvalBudget(outer_samples=64)
    zero = lve.pressure(ModelParams(1.0, 0.0), spec, 2, budget, RngStream(SEED, (10, 0)))
    ok = zero.estimate.mean == 0 and zero.estimate.std_err == 0
    parts = [f"lam=0: {zero.estimate.mean}"]
    for i, lam in enumerate((0.05, 0.125), start=1):
        res = lve.pressure(ModelParams(1.0, lam), spec, 2, budget, RngStream(SEED, (10, i)))
        chk = res.bound_check
        ok &= chk.passes and res.x_independent
        parts.append(f"lam={lam}: |P|={chk.value:.4f}+-{chk.std_err:.4f} bound={chk.bound:.4f} "
                     f"x-indep={res.x_independent}")
    report(capsys, 10, ok, "; ".join(parts))
    assert ok


def test_c11_determinism(capsys, tmp_path):
    config = {"lattice": {"spacing": 0.5, "half_length": 4.0},
              "budget": {"s_nodes": 4, "outer_samples": 256, "inner_samples": [16, 2]},
              "two_point": {"lambdas": [0.05], "separations": [0.0, 1.0], "n_max": 2}}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    digests = {}
    for threads in ("1", "8"):
        for rep in range(2):
            out = tmp_path / f"t{threads}_{rep}"
            code = cli.main(["two-point", "--config", str(path), "--seed", str(SEED), "--threads", threads,
                             "--out", str(out)])
            assert code == 0
            digests[(threads, rep)] = json.loads((out / "manifest.json").read_text())["results_sha256"]
    ok = len(set(digests.values())) == 1
    report(capsys, 11, ok, f"results.csv sha256 over 2 runs x threads {{1, 8}}: {sorted(set(digests.values()))}")
    assert ok
