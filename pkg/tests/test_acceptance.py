"""Acceptance suite: one PASS/FAIL line per criterion, asserted at the stated tolerance.

Heavy experiments run once through the harness (module scope) and are reused;
the determinism check reruns the same configs into a second directory.
"""

import json
import math
import time

import numpy as np
import pytest

from trapping import harness, meanfield as mf
from trapping.increments import BinaryFamily, ThreeAtomFamily
from trapping.network import init_state
from trapping.rate import build_profile, check_supermartingale, lambda_root

C_EXACT = 1.5 * math.log(3) - 2 * math.log(2)

CONFIGS = {
    "rate": """[experiment]
kind = rate
master_seed = 1

[family]
id = binary
kappa = 0.5

[rate]
grid_size = 512
""",
    "oracle": """[experiment]
kind = walk1d
master_seed = 9
n_runs = 100000

[family]
id = binary
kappa = 0.5

[walk1d]
x = 1/4
a_x = 1/4
oracle = true
""",
    "importance": """[experiment]
kind = walk1d
master_seed = 10
n_runs = 10

[family]
id = binary
kappa = 0.5

[walk1d]
x = 1/6
importance_x = 1/6, 1/8
delta = 0.2
naive_runs = 10000
tilted_runs = 1000
""",
}
PRESETS = {"trend": "exit-trend", "threes": "threes-company-N6", "spectrum": "spectrum-scan", "cert": "certificate-N6"}


def _config(key):
    if key in PRESETS:
        return harness.preset(PRESETS[key])
    return harness.parse_config(CONFIGS[key], source=f"acceptance:{key}")


class Runs:
    """Lazily run each experiment once and remember its result and wall time."""

    def __init__(self, root):
        self.root = root
        self.results = {}
        self.seconds = {}

    def __call__(self, key, tag="a"):
        if (key, tag) not in self.results:
            t0 = time.perf_counter()
            self.results[key, tag] = harness.run_experiment(_config(key), self.root / tag / key)
            self.seconds[key, tag] = time.perf_counter() - t0
        return self.results[key, tag]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture
def report(capsys):
    def emit(k, ok, text):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {k}: {text}")

    return emit


def test_criterion_01_rate_constant(report):
    t0 = time.perf_counter()
    prof = build_profile(BinaryFamily(0.5), 512)
    dt = time.perf_counter() - t0
    err = abs(prof.C - C_EXACT)
    ok = err < 1e-6 and dt < 1.0
    report(1, ok, f"C = {prof.C:.10f}, |C - C_exact| = {err:.2e} (tol 1e-6), build {dt:.3f}s (< 1s)")
    assert ok


def test_criterion_02_roots(report):
    fam = BinaryFamily(0.5)
    ws = np.linspace(0.001, 0.499, 100)
    binary_err = 0.0
    for w in ws:
        p = fam.p_up(w)
        binary_err = max(binary_err, abs(lambda_root(fam, w) - math.log(p / (1 - p))))

    tri = ThreeAtomFamily(0.5, 0.2)

    def bisect(w):
        pairs = tri.atoms(w).pairs()

        def z(lam):
            return math.fsum(float(q) * math.exp(-lam * float(v)) for v, q in pairs) - 1

        lo, hi = 1e-12, 1.0
        while z(hi) < 0:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if z(mid) < 0 else (lo, mid)
        return 0.5 * (lo + hi)

    tri_err = max(abs(lambda_root(tri, w, tol=1e-13) - bisect(w)) for w in np.linspace(0.01, 0.49, 40))
    ok = binary_err < 1e-10 and tri_err < 1e-9
    report(2, ok, f"binary max error {binary_err:.2e} (tol 1e-10), three-atom vs bisection {tri_err:.2e} (tol 1e-9)")
    assert ok


def test_criterion_03_supermartingale(report):
    fam = BinaryFamily(0.5)
    prof = build_profile(fam)
    grid = np.linspace(1 / 40, 0.5, 201)  # one full step from either wall
    rep = check_supermartingale(fam, prof, 1 / 40, 0.2, grid, slack=1e-9)
    n_bad = len(rep.failing)
    report(
        3,
        rep.holds,
        f"max ratio {rep.max_ratio:.6f} at w = {rep.worst_w:.4f}; {n_bad}/{len(grid)} grid points exceed 1 + 1e-9",
    )
    assert rep.holds


def test_criterion_04_spectrum(report, runs):
    worst_eig, worst_vec, attracting = 0.0, 0.0, True
    for n in range(4, 41):
        A = mf.reduced_matrix(n)
        numeric = np.sort(np.linalg.eigvals(A).real)
        worst_eig = max(worst_eig, float(np.max(np.abs(numeric - np.sort(mf.closed_form_eigenvalues(n))))))
        L = mf.left_eigenvectors(n)
        for v, lam in zip(L, mf.closed_form_eigenvalues(n)):
            worst_vec = max(worst_vec, float(np.max(np.abs(v @ A - lam * v))))
        attracting &= mf.spectrum(n).attracting
    harness_ok = runs("spectrum").summary["attracting_all"]
    ok = worst_eig < 1e-9 and worst_vec < 1e-12 and attracting and harness_ok
    report(4, ok, f"eigenvalue error {worst_eig:.2e} (tol 1e-9), left-vector residual {worst_vec:.2e} (tol 1e-12), attracting n=4..40: {attracting}")
    assert ok


def test_criterion_05_fixed_point(report):
    drift_err, reinf_err = 0.0, 0.0
    for N in (4, 5, 6, 7, 8):
        d = mf.drift(init_state(N, 0.05, "stationary", "triad"))
        drift_err = max(drift_err, float(np.max(np.abs(d.value))))
        reinf_err = max(reinf_err, float(np.max(np.abs(d.reinforcement - 6 / (N - 1)))))
    ok = drift_err < 1e-12 and reinf_err < 1e-12
    report(5, ok, f"max |drift| at c {drift_err:.2e}, max |E R - 6/n| {reinf_err:.2e} (tol 1e-12), N = 4..8")
    assert ok


def test_criterion_06_linearization(report, runs):
    eps = 0.01
    full = mf.linearization_excess(6, eps, "pairwise")
    half = mf.linearization_excess(6, eps / 2, "pairwise")
    d1 = abs(full.excess[1])
    within = all(full.residual(j) <= 10 * eps**2 for j in (0, 2))
    tighten = [full.residual(j) / half.residual(j) for j in (0, 2)]
    fourfold = all(3.5 <= r <= 4.5 for r in tighten)
    triad = mf.linearization_excess(6, eps, "triad")
    ok = d1 < 1e-12 and within and fourfold
    report(
        6,
        ok,
        f"pairwise choice: d1 excess {d1:.1e}, residuals d0 {full.residual(0):.2e} d2 {full.residual(2):.2e} "
        f"(tol {10 * eps**2:.0e}), halving ratios {tighten[0]:.2f}/{tighten[1]:.2f}; "
        f"three-factor choice d1 excess {triad.excess[1]:.2e}",
    )
    runs("spectrum")
    assert ok


def test_criterion_07_threes_company(report, runs):
    res = runs("threes")
    cells = {c["x"]: c for c in res.summary["cells"]}
    hi, lo = cells[0.4]["trapped_3_3"], cells[0.2]["trapped_3_3"]
    dt = runs.seconds["threes", "a"]
    ok = hi >= 90 and lo <= 5 and dt < 120
    report(
        7,
        ok,
        f"x=0.4: {hi}/100 split into 3+3 (need >= 90; outcomes {cells[0.4]['outcomes']}); "
        f"x=0.2: {lo}/100 (need <= 5); {dt:.1f}s",
    )
    assert ok


def test_criterion_08_exit_trend(report, runs):
    res = runs("trend")
    cells = sorted(res.summary["cells"], key=lambda c: -c["x"])
    means = [c["mean_T"] for c in cells]
    ses = [c["se_T"] for c in cells]
    separated = all(means[i] + 3 * ses[i] < means[i + 1] - 3 * ses[i + 1] for i in range(len(cells) - 1))
    fit = res.summary["fit"]
    dt = runs.seconds["trend", "a"]
    ok = separated and fit["slope"] - 2 * fit["slope_se"] > 0 and dt < 300
    report(
        8,
        ok,
        "means " + ", ".join(f"{m:.2f}+-{s:.2f}" for m, s in zip(means, ses))
        + f"; slope {fit['slope']:.4f} +- {fit['slope_se']:.4f} (C = {fit['reference_C']:.4f}); {dt:.1f}s",
    )
    assert ok


def test_criterion_09_oracle(report, runs):
    cell = runs("oracle").summary["cells"][0]
    z = (cell["mean_T"] - cell["oracle"]) / cell["se_T"]
    ok = abs(z) <= 3
    report(9, ok, f"MC {cell['mean_T']:.4f} +- {cell['se_T']:.4f} vs oracle {cell['oracle']:.6f}, z = {z:.2f}")
    assert ok


def test_criterion_10_importance(report, runs):
    imp = {c["x"]: c for c in runs("importance").summary["importance"]}
    a = imp[1 / 6]
    (pn, sn, _), (pt, st, _, _) = a["naive"], a["tilted"]
    z = (pt - pn) / math.hypot(sn, st)
    b = imp[1 / 8]
    rse_n, rse_t = b["naive"][2], b["tilted"][2]
    ok = abs(z) <= 3 and rse_t <= rse_n
    report(
        10,
        ok,
        f"x=1/6 naive {pn:.4f}+-{sn:.4f} tilted {pt:.4f}+-{st:.4f} (z = {z:.2f}); "
        f"x=1/8 step-normalized rse tilted {rse_t:.2f} vs naive {rse_n:.2f}",
    )
    assert ok


def test_criterion_11_certificate(report, runs):
    res = runs("cert")
    cert = json.loads((res.out_dir / "certificate.json").read_text())
    lam, gamma, V0 = cert["lambda"], cert["gamma"], cert["V0"]
    ok = cert["verified"] and lam is not None and lam > 0 and gamma > 0 and math.isclose(gamma, lam * V0 / 4)
    worst = cert["worst"]
    report(
        11,
        ok,
        f"verified = {cert['verified']}, lambda = {lam}, gamma = {gamma}; "
        f"worst {worst['check']} margin {worst['margin']:.3e} at grid point {worst['index']}",
    )
    assert ok


def test_criterion_12_determinism(report, runs):
    keys = ["rate", "oracle", "importance", "trend", "threes", "spectrum", "cert"]
    compared, diffs = 0, []
    for key in keys:
        a, b = runs(key, "a"), runs(key, "b")
        assert a.files == b.files
        for name in a.files:
            if name == "manifest.json":
                continue
            compared += 1
            if (a.out_dir / name).read_bytes() != (b.out_dir / name).read_bytes():
                diffs.append(f"{key}/{name}")
    ok = not diffs and compared > 0
    report(12, ok, f"{compared} data files compared across {len(keys)} experiments, {len(diffs)} differ {diffs[:5]}")
    assert ok
