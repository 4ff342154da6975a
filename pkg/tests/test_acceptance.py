"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Tolerances are pinned here, not configurable.
"""

import math
import time

import numpy as np
import pytest

import pardiff as pd
from pardiff.cli import main as cli_main
from pardiff.elliptic import _centered_laplacian


def _report(number, name, elapsed=None):
    suffix = f" ({elapsed:.2f}s)" if elapsed is not None else ""
    print(f"ACCEPTANCE {number:2d} {name}: PASS{suffix}")


def zero_interior(g):
    values = g.values.copy()
    values[tuple(slice(1, -1) for _ in range(g.spec.dim))] = 0.0
    return pd.GridFunction(g.spec, values)


def compact_poly_bump(spec, radius, power=4):
    meshes = spec.meshes()
    s = sum(m * m for m in meshes) / radius**2
    return pd.GridFunction(spec, np.where(s < 1.0, np.maximum(0.0, 1.0 - s) ** power, 0.0))


def make_stencil(dim, terms, h=1.0):
    return pd.Stencil(
        dim,
        h,
        tuple(
            pd.StencilTerm(shift, pd.parse(c) if isinstance(c, str) else c)
            for shift, c in terms
        ),
    )


WAVE = (
    ((2, 0), 1.0), ((1, 0), -2.0), ((0, 0), 1.0),
    ((0, 2), -1.0), ((0, 1), 2.0), ((0, 0), -1.0),
)
HEAT = (
    ((1, 0), 1.0), ((-1, 0), -1.0),
    ((0, 1), -1.0), ((0, 0), 2.0), ((0, -1), -1.0),
)
TRICOMI = (
    ((0, 2), "x2"), ((0, 1), "-2*x2"), ((0, 0), "x2"),
    ((2, 0), 1.0), ((1, 0), -2.0), ((0, 0), 1.0),
)


def hand_summed_matrix(terms, point=(0.0, 0.0)):
    """Oracle: accumulate shift outer products term by term, no library path."""
    dim = len(terms[0][0])
    out = np.zeros((dim, dim))
    for shift, coeff in terms:
        value = coeff if isinstance(coeff, float) else pd.evaluate(pd.parse(coeff), point)
        out += value * np.outer(shift, shift)
    return out


def test_criterion_01_classification_triple():
    start = time.perf_counter()
    for dim in (2, 3):
        s = pd.laplace_stencil(dim, 0.5)
        eig = pd.eigen_symmetric(pd.coefficient_matrix(s, (0.0,) * dim))
        assert np.abs(eig - 2.0).max() <= 1e-12  # Q = 2I
        assert pd.classify_at(s, (0.0,) * dim) == "elliptic"
    wave = make_stencil(2, WAVE)
    assert np.array_equal(hand_summed_matrix(WAVE), [[2.0, 0.0], [0.0, -2.0]])
    eig = pd.eigen_symmetric(pd.coefficient_matrix(wave, (0.0, 0.0)))
    assert np.abs(eig - [-2.0, 2.0]).max() <= 1e-12
    assert pd.classify_at(wave, (0.0, 0.0)) == "hyperbolic"
    heat = make_stencil(2, HEAT)
    assert np.array_equal(hand_summed_matrix(HEAT), [[0.0, 0.0], [0.0, -2.0]])
    eig = pd.eigen_symmetric(pd.coefficient_matrix(heat, (0.0, 0.0)))
    assert np.abs(eig - [-2.0, 0.0]).max() <= 1e-12
    assert pd.classify_at(heat, (0.0, 0.0)) == "parabolic"
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(1, "classification triple", elapsed)


def test_criterion_02_variable_coefficient_region_map():
    start = time.perf_counter()
    s = make_stencil(2, TRICOMI, h=0.02)
    probe = pd.GridSpec((0.0, -1.0), 0.02, (1, 101))
    report = pd.classify_region(s, probe, tol=1e-9)
    for k in range(101):
        x2 = report.points[k][1]
        if abs(x2) <= 1e-9:
            expected = "parabolic"
        else:
            expected = "elliptic" if x2 > 0 else "hyperbolic"
        assert report.labels[k] == expected
    assert report.counts == {"elliptic": 50, "hyperbolic": 50, "parabolic": 1}
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(2, "variable-coefficient region map", elapsed)


def test_criterion_03_discrete_exactness():
    start = time.perf_counter()
    for h in (1 / 16, 0.05, 1 / 3):
        spec = pd.GridSpec((-1.0, -1.0), h, (12, 12))
        lap = pd.laplace_stencil(2, h)
        for text in ("x1^2 - x2^2", "x1*x2", "2*x1 - 3*x2 + 1", "x1", "0.5"):
            u = pd.sample(text, spec)
            scale = max(1.0, np.abs(u.values).max())
            assert np.abs(lap.apply(u).values).max() <= 1e-12 * scale
        bih = pd.biharmonic_stencil(2, h)
        for text in ("x1^2 + x2^2", "x1^3 - 3*x1*x2^2"):
            u = pd.sample(text, spec)
            scale = max(1.0, np.abs(u.values).max())
            assert np.abs(bih.apply(u).values).max() <= 1e-12 * scale
    _report(3, "discrete exactness of the difference operators", time.perf_counter() - start)


def test_criterion_04_mollifier_contract():
    start = time.perf_counter()
    spacing_for = {1: 1 / 32, 2: 1 / 16, 3: 1 / 8}
    refine_for = {1: 16, 2: 8, 3: 4}
    for dim in (1, 2, 3):
        for eps in (0.25, 0.5):
            k = pd.make_mollifier(dim, eps, spacing_for[dim], refine_for[dim])
            assert abs(k.mass - 1.0) <= 1e-12
            values = k.samples.values
            assert (values >= 0.0).all()
            flipped = values[tuple(slice(None, None, -1) for _ in range(dim))]
            assert np.array_equal(values, flipped)  # exact central symmetry
            meshes = k.samples.spec.meshes()
            radius = np.sqrt(sum(m * m for m in meshes))
            outside = radius > eps + 1e-12
            if outside.any():
                assert np.abs(values[outside]).max() == 0.0
    spec = pd.GridSpec((-2.0, -2.0), 1 / 32, (129, 129))
    f = pd.sample("exp(-(x1^2+x2^2))", spec)
    errors, non_increasing = pd.l1_convergence(f, [0.5, 0.25, 0.125], refine=8)
    assert non_increasing
    assert errors[-1] < 0.25 * errors[0]
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _report(4, "mollifier contract and L1 convergence", elapsed)


def test_criterion_05_derivative_commutation():
    start = time.perf_counter()
    spec = pd.GridSpec((0.0, 0.0), 1 / 8, (21, 21))
    kernel = pd.make_mollifier(2, 0.25, 1 / 8, 8)
    derivative_scale = max(1.0, 1.0 / kernel.eps)
    rng = np.random.default_rng(1234)
    for trial in range(100):
        f = pd.GridFunction(spec, rng.standard_normal(spec.extents))
        scale = max(1.0, np.abs(f.values).max()) * derivative_scale
        axis = 1 + (trial % 2)
        assert pd.derivative_commute(f, kernel, axis) <= 1e-10 * scale
    _report(5, "derivative commutation under smoothing", time.perf_counter() - start)


def test_criterion_06_fundamental_solution():
    start = time.perf_counter()
    fs2 = pd.FundamentalSolution(2)
    assert abs(fs2.evaluate((math.e, 0.0)) - 1.0 / (2.0 * math.pi)) <= 1e-12
    fs3 = pd.FundamentalSolution(3)
    assert abs(fs3.evaluate((1.0, 0.0, 0.0)) + 1.0 / (4.0 * math.pi)) <= 1e-12
    rng = np.random.default_rng(2024)
    for dim in (2, 3, 4):
        pts = rng.uniform(-1.0, 1.0, size=(400_000, dim))
        inside = (pts * pts).sum(axis=1) <= 1.0
        estimate = dim * 2.0**dim * inside.mean()  # area = n * vol(unit ball)
        assert abs(estimate - pd.sphere_area(dim)) <= 0.01 * pd.sphere_area(dim)
    _report(6, "fundamental solution values and sphere areas", time.perf_counter() - start)


def test_criterion_07_potential_consistency():
    start = time.perf_counter()
    fs = pd.FundamentalSolution(2)
    support_radius = 1.75
    residuals = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        n_src = round(4.5 / h) + 1
        source_spec = pd.GridSpec((-2.25, -2.25), h, (n_src, n_src))
        f = compact_poly_bump(source_spec, support_radius)
        n_tgt = round(2.5 / h) + 1
        targets = pd.GridSpec((-1.25, -1.25), h, (n_tgt, n_tgt))
        u = pd.newtonian_potential(fs, f, targets)
        out = pd.laplace_stencil(2, h, scaled=True).apply(u)
        expected = pd.restrict(f, out.spec)
        residuals.append(
            np.abs(out.values - expected.values).max() / np.abs(f.values).max()
        )
    assert residuals[1] < 0.05  # h = 1/32
    assert residuals[0] > residuals[1] > residuals[2]  # improves under halving

    # Far field vs the point-source asymptote, beyond 5 support radii.
    h = 1 / 16
    small_spec = pd.GridSpec((-1.0, -1.0), h, (33, 33))
    g = compact_poly_bump(small_spec, 0.5)
    mass = h * h * g.values.sum()
    for d in (2.5, 4.0, 6.0):
        for angle in np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False):
            point = (d * math.cos(angle), d * math.sin(angle))
            target = pd.GridSpec(point, h, (1, 1))
            value = pd.newtonian_potential(fs, g, target).values[0, 0]
            reference = mass * fs.radial(d)
            assert abs(value - reference) <= 0.02 * abs(reference)
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    _report(7, "volume potential consistency and far field", elapsed)


def _laplace_convergence_solves():
    solves = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        n = round(1.0 / h) + 1
        spec = pd.GridSpec((0.0, 0.0), h, (n, n))
        exact = pd.sample("exp(x1)*sin(x2)", spec)
        report = pd.solve_laplace_dirichlet(zero_interior(exact), tol=1e-10, max_iter=100_000)
        solves.append((h, report, exact))
    return solves


def test_criterion_08_solver_convergence_order():
    start = time.perf_counter()
    laplace_errors = []
    for h, report, exact in _laplace_convergence_solves():
        assert report.converged and report.iterations <= 100_000
        assert report.final_residual <= 1e-10
        laplace_errors.append(np.abs(report.solution.values - exact.values).max())
    for e0, e1 in zip(laplace_errors, laplace_errors[1:]):
        assert 3.4 <= e0 / e1 <= 4.6
    poisson_errors = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        n = round(1.0 / h) + 1
        spec = pd.GridSpec((0.0, 0.0), h, (n, n))
        exact = pd.sample("sin(x1)*sin(x2)", spec)
        f = pd.sample("-2*sin(x1)*sin(x2)", spec)
        report = pd.solve_poisson_dirichlet(f, zero_interior(exact), tol=1e-10, max_iter=100_000)
        assert report.converged and report.final_residual <= 1e-10
        poisson_errors.append(np.abs(report.solution.values - exact.values).max())
    for e0, e1 in zip(poisson_errors, poisson_errors[1:]):
        assert 3.4 <= e0 / e1 <= 4.6
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    _report(8, "solver convergence order", elapsed)


def test_criterion_09_max_principle_and_mean_value():
    start = time.perf_counter()
    finest = None
    for h, report, exact in _laplace_convergence_solves():
        assert report.converged
        passed, witness = pd.max_principle_check(report.solution)
        assert passed and witness is None
        finest = (h, report)
    h, report = finest
    assert h == 1 / 64
    harmonic_deviation = pd.mean_value_check(report.solution, (0.5, 0.5), 0.25)
    assert harmonic_deviation <= 1e-2
    control = pd.sample("x1^2 + x2^2", report.solution.spec)
    control_deviation = pd.mean_value_check(control, (0.5, 0.5), 0.25)
    assert control_deviation >= 10.0 * harmonic_deviation
    _report(9, "max principle and mean value", time.perf_counter() - start)


def test_criterion_10_harnack_dichotomy():
    start = time.perf_counter()
    spec = pd.GridSpec((0.0, 0.0), 0.125, (9, 9))
    base = pd.sample("x1*x2", spec)
    monotone = [
        pd.GridFunction(spec, (1.0 - 2.0**-k) * base.values) for k in range(1, 12)
    ]
    verdict = pd.harnack_limit(monotone, 1, 1e-3)
    assert verdict.outcome == "finite_limit"
    assert verdict.limit_residual is not None and verdict.limit_residual <= 1e-10
    constants = [pd.GridFunction(spec, float(k) * np.ones((9, 9))) for k in range(1, 13)]
    assert pd.harnack_limit(constants, 1, 0.1).outcome == "divergent"
    broken = [base, pd.GridFunction(spec, 0.5 * base.values), base]
    verdict = pd.harnack_limit(broken, 1, 1e-3)
    assert verdict.outcome == "violation" and verdict.witness is not None
    _report(10, "monotone-limit dichotomy", time.perf_counter() - start)


def test_criterion_11_biharmonic_splitting():
    start = time.perf_counter()
    tol = 1e-10
    spec = pd.GridSpec((0.0, 0.0), 1 / 16, (17, 17))
    zero = pd.GridFunction(spec, np.zeros((17, 17)))
    quad = pd.sample("x1^2 + x2^2", spec)
    four = pd.GridFunction(spec, np.full((17, 17), 4.0))
    report = pd.solve_biharmonic(zero, zero_interior(quad), zero_interior(four), tol=tol)
    assert report.converged
    assert np.abs(report.solution.values - quad.values).max() <= tol
    cubic = pd.sample("x1^3 - 3*x1*x2^2", spec)
    report = pd.solve_biharmonic(zero, zero_interior(cubic), zero, tol=tol)
    assert report.converged
    assert np.abs(report.solution.values - cubic.values).max() <= tol

    # Smooth non-polynomial case: the composed centered fourth-order operator
    # residual on the sampled analytic solution, and the splitting solution
    # error, both shrink at order >= 1.5 under h-halving.
    u_text = "x1*sin(x1)*(exp(x2)-exp(-x2))/2"
    lap_text = "2*cos(x1)*(exp(x2)-exp(-x2))/2"
    consistency = []
    solver_errors = []
    spacings = (1 / 8, 1 / 16, 1 / 32)
    for h in spacings:
        n = round(1.0 / h) + 1
        sp = pd.GridSpec((0.0, 0.0), h, (n, n))
        exact = pd.sample(u_text, sp)
        lap_exact = pd.sample(lap_text, sp)
        z = pd.GridFunction(sp, np.zeros((n, n)))
        composed = _centered_laplacian(_centered_laplacian(exact.values, h), h)
        consistency.append(np.abs(composed).max())
        rep = pd.solve_biharmonic(z, zero_interior(exact), zero_interior(lap_exact), tol=1e-11)
        assert rep.converged
        solver_errors.append(np.abs(rep.solution.values - exact.values).max())
    for sequence in (consistency, solver_errors):
        orders = [math.log2(sequence[i] / sequence[i + 1]) for i in range(len(sequence) - 1)]
        assert min(orders) >= 1.5
    _report(11, "biharmonic splitting", time.perf_counter() - start)


def test_criterion_12_cli_determinism(tmp_path, capsys):
    start = time.perf_counter()
    stencil_path = tmp_path / "lap.stn"
    pd.save_stencil(pd.laplace_stencil(2, 1 / 16), str(stencil_path))
    spec = pd.GridSpec((0.0, 0.0), 1 / 16, (17, 17))
    grid_path = tmp_path / "box.grd"
    pd.save_grid(pd.sample("x1^2 - x2^2", spec), str(grid_path))

    def run_once(tag):
        outputs = {}
        cli_main(["classify", "--stencil", str(stencil_path), "--at", "0.3", "0.7"])
        outputs["classify"] = capsys.readouterr().out
        applied = tmp_path / f"applied{tag}.grd"
        cli_main(
            ["apply", "--stencil", str(stencil_path), "--grid", str(grid_path), "--output", str(applied)]
        )
        outputs["apply"] = applied.read_bytes()
        solution = tmp_path / f"sol{tag}.grd"
        csv = tmp_path / f"rep{tag}.csv"
        cli_main(
            [
                "solve",
                "laplace",
                "--grid",
                str(grid_path),
                "--boundary",
                "exp(x1)*sin(x2)",
                "--output",
                str(solution),
                "--report",
                str(csv),
            ]
        )
        capsys.readouterr()
        outputs["solution"] = solution.read_bytes()
        outputs["report"] = csv.read_bytes()
        smooth = tmp_path / f"smooth{tag}.grd"
        cli_main(["mollify", "--grid", str(grid_path), "--eps", "0.25", "--output", str(smooth)])
        outputs["mollify_report"] = capsys.readouterr().out
        outputs["smooth"] = smooth.read_bytes()
        cli_main(
            [
                "convergence",
                "--problem",
                "laplace",
                "--reference",
                "exp(x1)*sin(x2)",
                "--h",
                "0.125",
                "0.0625",
                "--origin",
                "0",
                "0",
                "--length",
                "1",
            ]
        )
        outputs["convergence"] = capsys.readouterr().out
        return outputs

    first = run_once(0)
    second = run_once(1)
    assert first.keys() == second.keys()
    for key in first:
        assert first[key] == second[key], f"output {key} differs between identical runs"
    _report(12, "CLI determinism", time.perf_counter() - start)
