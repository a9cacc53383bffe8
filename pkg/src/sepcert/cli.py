"""Command-line front-end: run a certification pipeline and write a JSON report.

Every subcommand produces a flat list of checks ``{check_id, value,
tolerance, relation, pass}``; the exit code is 0 iff all checks pass, 1 on a
failed check and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
OUTPUT_ENV = "SEPCERT_OUTPUT_DIR"
DEFAULT_OUTPUT = "sepcert-out"


class ConfigError(ValueError):
    """Invalid command-line configuration (exit code 2)."""


class Report:
    def __init__(self, subcommand: str, config: dict):
        self.subcommand = subcommand
        self.config = config
        self.checks = []
        self.data = {}

    def check(self, check_id: str, value, tolerance, relation: str = "<"):
        value = float(value)
        if relation == "<":
            ok = value < tolerance
        elif relation == "<=":
            ok = value <= tolerance
        elif relation == ">=":
            ok = value >= tolerance
        elif relation == "==":
            ok = value == tolerance
        else:
            raise ValueError(relation)
        ok = ok and math.isfinite(value)
        self.checks.append({"check_id": check_id, "value": _num(value), "tolerance": _num(tolerance),
                            "relation": relation, "pass": bool(ok)})
        return ok

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> str:
        doc = {"schema_version": SCHEMA_VERSION, "subcommand": self.subcommand, "config": self.config,
               "checks": self.checks, "passed": self.passed}
        if self.data:
            doc["data"] = self.data
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


# --- argument parsing helpers ---------------------------------------------


def float_list(n=None):
    def parse(text):
        try:
            vals = [float(t) for t in text.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
        if n is not None and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise argparse.ArgumentTypeError("values must be finite")
        return vals
    return parse


def positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


# --- subcommands -------------------------------------------------------------


def _avoiding(rng, n, low, high, centres, margin):
    out = []
    while len(out) < n:
        q = rng.uniform(low, high, 2)
        if all(np.linalg.norm(q - c) > margin for c in centres):
            out.append(q)
    return np.array(out)


def run_benenti(args, report: Report, out: Path):
    from .charts import cartesian
    from .killing import (benenti_hierarchy, elliptic_l_tensor, integral_potential_field, is_conformal_killing,
                          is_killing, nijenhuis_torsion, probe_points, two_center_potential)
    from .observables import poisson_bracket, quadratic_observable

    rng = np.random.default_rng(args.seed)
    chart = cartesian(2)
    L = elliptic_l_tensor(args.c, args.axis)
    Ks = benenti_hierarchy(L)
    pts = probe_points(chart, seed=args.seed)
    report.check("l_tensor.eigen_gap", float(np.min(L.eigenvalue_gaps(pts))), 1e-8, ">=")
    report.check("l_tensor.torsion", max(np.abs(nijenhuis_torsion(L, q)).max() for q in pts), 1e-6)
    report.check("l_tensor.conformal_killing", is_conformal_killing(L.tensor, chart, 20, args.seed).worst_residual, 1e-6)
    for a, K in enumerate(Ks):
        report.check(f"K{a}.killing", is_killing(K, chart, args.samples, args.seed).worst_residual, 1e-6)
    foci = [np.eye(2)[1 - args.axis] * args.c, -np.eye(2)[1 - args.axis] * args.c]
    V = two_center_potential(args.c, args.axis, args.strength, args.omega)
    base = np.array([1.7, 1.3])
    Vs = [V] + [integral_potential_field(K, V, chart, base) for K in Ks[1:]]
    Hs = [quadratic_observable(K, v) for K, v in zip(Ks, Vs)]
    points = _avoiding(rng, args.samples, -2.0, 2.0, foci, 0.2)
    rows, worst_bracket, worst_comm = [], 0.0, 0.0
    for q in points:
        res = [poisson_bracket(Hs[i], Hs[j], q, chart).max_abs() for i, j in itertools.combinations(range(len(Hs)), 2)]
        lm = L.mixed(q)
        comm = max(np.linalg.norm(K(q) @ lm.T - lm @ K(q)) / max(1.0, np.linalg.norm(K(q)) * np.linalg.norm(lm))
                   for K in Ks)
        worst_bracket, worst_comm = max(worst_bracket, *res), max(worst_comm, comm)
        rows.append([*q, *res])
    report.check("hierarchy.commute", worst_bracket, 1e-6)
    report.check("hierarchy.common_eigenvectors", worst_comm, 1e-8)
    flat = np.array([K(points[0]).ravel() for K in Ks])
    s = np.linalg.svd(flat, compute_uv=False)
    report.check("hierarchy.independence", s[-1] / s[0], 1e-6, ">=")
    pairs = [f"bracket_{i}{j}" for i, j in itertools.combinations(range(len(Hs)), 2)]
    _write_csv(out / "benenti_brackets.csv", ["x", "y", *pairs], rows)


def run_sepcurve(args, report: Report, out: Path):
    from .sepcurve import SeparationCurveSpec, build_family, char_coeffs, dispersionless_rhs, sample_lambda, \
        tensor_diagonals
    from .observables import poisson_bracket
    from .superint3 import independence_rank

    try:
        spec = SeparationCurveSpec(args.n, args.m, args.k)
    except ValueError as exc:
        raise ConfigError(str(exc))
    rng = np.random.default_rng(args.seed)
    fam = build_family(spec)
    lams = sample_lambda(spec, rng, args.points)
    mus = rng.normal(size=lams.shape)
    report.check("curve_identity", max(np.abs(fam.curve_residual(l, m)).max() for l, m in zip(lams, mus)), 1e-8)
    report.check("cayley_hamilton", max(np.abs(tensor_diagonals(l, extra=True)[-1]).max() for l in lams), 1e-12)
    worst = 0.0
    for lam in lams:
        for i, j in itertools.combinations(range(spec.n), 2):
            worst = max(worst, poisson_bracket(fam.hamiltonians[i], fam.hamiltonians[j], lam, fam.chart).max_abs())
    report.check("hamiltonians.commute", worst, 1e-6)
    report.check("hamiltonians.rank", independence_rank(fam.hamiltonians, lams[0], mus[0]), spec.n, "==")

    table = []
    for lam in lams[: args.table_points]:
        table.append({"lambda": lam, "char_coeffs": char_coeffs(lam),
                      "hamiltonians": [{"".join(map(str, mono)): c for mono, c in sorted(h.at(lam).coeffs.items())}
                                       for h in fam.hamiltonians]})
    x = np.linspace(-1.0, 1.0, args.grid)
    # manufactured fields: characteristic coefficients of well separated roots
    roots = np.array([(spec.n - i) + 0.2 * np.sin(np.pi * (i + 1) * x) for i in range(spec.n)])
    fields = np.array([char_coeffs(r) for r in roots.T]).T
    rhs = {f"t{i}": dispersionless_rhs(fam, i, x, fields) for i in range(1, spec.n + 1)}
    with open(out / "sepcurve_tables.json", "w") as fh:
        json.dump(_jsonable({"spec": [spec.n, spec.m, spec.k], "coefficients": table,
                             "dispersionless": {"x": x, "fields": fields, "rhs": rhs}}), fh, indent=1, sort_keys=True)


def run_henon_heiles(args, report: Report, out: Path):
    from .observables import poisson_bracket
    from .sepcurve import henon_heiles_cartesian, henon_heiles_chart

    rng = np.random.default_rng(args.seed)
    chart = henon_heiles_chart(1)
    h1, h2 = henon_heiles_cartesian(1)
    pts = chart.sample(rng, args.points)
    worst = 0.0
    for q in pts[:20]:
        got = h1.at(q)
        want = {(2, 0): 0.5, (0, 2): 0.5, (0, 0): q[0] ** 3 + 0.5 * q[0] * q[1] ** 2}
        monos = set(got.coeffs) | set(want)
        worst = max(worst, max(abs(got.coeff(m) - want.get(m, 0.0)) for m in monos))
    report.check("H1.cartesian_form", worst, 1e-8)
    report.check("H1_H2.commute", max(poisson_bracket(h1, h2, q, chart).max_abs() for q in pts), 1e-6)
    table = [{"q": q, "H2": {"".join(map(str, m)): c for m, c in sorted(h2.at(q).coeffs.items())}}
             for q in pts[: args.table_points]]
    with open(out / "henon_heiles_H2.json", "w") as fh:
        json.dump(_jsonable(table), fh, indent=1, sort_keys=True)


def run_cofactor(args, report: Report, out: Path):
    from .charts import cartesian
    from .cofactor import check_cofactor, example_k_reference, example_system, example_tensor, tne_example_coords
    from .killing import is_special_conformal

    a0, a1, b0, b1 = args.region
    if not (a0 < a1 and b0 < b1):
        raise ConfigError("region bounds must be increasing")
    res = check_cofactor(example_system(), example_tensor(), ((a0, a1), (b0, b1)), args.grid)
    report.check("closedness", res.closedness_residual, 1e-6)
    report.check("path_agreement", res.path_disagreement, 1e-8)
    if res.k is not None:
        ref = np.array([example_k_reference(x) for x in res.grid])
        diff = res.k_samples - ref
        report.check("k.rms_vs_closed_form", np.sqrt(np.mean((diff - diff.mean()) ** 2)), 1e-8)
    conf, kill = is_special_conformal(example_tensor(), cartesian(2), 20, args.seed)
    report.check("G.conformal_killing", conf.worst_residual, 1e-6)
    report.check("trG_minus_G.killing", kill.worst_residual, 1e-6)
    flow = tne_example_coords(t_end=args.t_end)
    report.check("u1.oscillator_residual", flow.u1_residual, 1e-6)
    report.check("u2.equation_residual", flow.u2_residual, 1e-6)
    report.check("E1.drift", flow.energy_drift, 1e-6)
    k = res.k_samples if res.k is not None else np.full(len(res.grid), np.nan)
    _write_csv(out / "cofactor_grid.csv", ["x1", "x2", "closedness_residual", "k"],
               [[*x, r, kv] for x, r, kv in zip(res.grid, res.residual_map, k)])


DEFAULT_X0 = {"calogero": (1.0, 0.0, -1.0), "wolfes": (1.0, 0.25, -1.0), "new": (1.0, 0.0, -1.0)}


def run_superint3(args, report: Report, out: Path):
    from .observables import poisson_bracket
    from .superint3 import CHART, POTENTIALS, drift_report, generic_rank, integrals, jacobi_map, line_trajectory
    from .errors import DomainError

    rng = np.random.default_rng(args.seed)
    P = POTENTIALS[args.potential](args.k)
    obs = integrals(P)
    x0 = args.x0 or DEFAULT_X0[args.potential]
    defects = []
    while len(defects) < args.points:
        x = rng.normal(size=3)
        try:
            defects.append(P.form_defect(x))
        except DomainError:
            continue
    report.check("form_invariant", max(defects), 1e-10)
    worst = 0.0
    count = 0
    while count < args.bracket_points:
        q = CHART.sample(rng, 1)[0]
        try:
            worst = max(worst, *(poisson_bracket(obs[0], h, q, CHART).max_abs() for h in obs[1:]))
        except DomainError:
            continue
        count += 1
    report.check("integrals.commute_with_H", worst, 1e-6)
    ranks = generic_rank(obs, rng, 4, args.points)
    report.check("rank.min", min(ranks), 4, ">=")
    report.check("rank.max", max(ranks), 4, "<=")
    drifts, traj = drift_report(P, x0, args.v0, args.t_end, args.rel_tol)
    for name, d in zip(["H", "H1", "H2", "H3", "H4"], drifts):
        report.check(f"drift.{name}", d, 1e-6)
    report.data["initial_state"] = {"x": x0, "v": args.v0, "cylindrical": jacobi_map(x0)}
    xs, vs = line_trajectory(traj)
    _write_csv(out / f"superint3_{args.potential}_trajectory.csv",
               ["t", "x1", "x2", "x3", "v1", "v2", "v3", "r", "psi", "z", "p_r", "p_psi", "p_z"],
               [[t, *x, *v, *q, *p] for t, x, v, q, p in zip(traj.times, xs, vs, traj.q, traj.p)])


def run_stackel_fit(args, report: Report, out: Path):
    from .charts import cartesian
    from .killing import characteristic_residual, is_killing
    from .stackelfit import (FitRegion, SeparableFamily, compare_with_we, fit_family, integral_potential_gradient,
                             mu_identity_diagnostic, mu_scalar, quadrupole_potential, self_consistency_floor)

    if not 0 < args.r_min < args.r_max:
        raise ConfigError("need 0 < r-min < r-max")
    V = quadrupole_potential(args.G, args.D)
    region = FitRegion(args.r_min, args.r_max, args.nr, args.ntheta)
    family = SeparableFamily(args.family)
    if args.family == "elliptic":
        if not 0 < args.c2_min < args.c2_max:
            raise ConfigError("need 0 < c2-min < c2-max")
        prange = (math.sqrt(args.c2_min), math.sqrt(args.c2_max))
    else:
        prange = (args.param_min, args.param_max)
        if not prange[0] < prange[1]:
            raise ConfigError("need param-min < param-max")
    res = fit_family(V, family, region, prange, n_scan=args.scan)
    member = res.fit.member
    report.check("family.killing", is_killing(member.killing, cartesian(2), 20, args.seed).worst_residual, 1e-6)
    X, Y, _ = region.grid()
    rng = np.random.default_rng(args.seed)
    idx = rng.choice(X.size, size=min(40, X.size), replace=False)
    chart = cartesian(2)
    report.check("W.characteristic_residual",
                 max(np.abs(characteristic_residual(member.killing, res.fit.W, chart, np.array([X[i], Y[i]]))).max()
                     for i in idx), 1e-6)
    VK = integral_potential_gradient(res.fit)
    mus = [mu_scalar(member.killing, V, VK, chart, np.array([X[i], Y[i]])) for i in idx]
    report.check("mu.nonnegative", min(mus), 0.0, ">=")
    report.data["param"] = res.param
    report.data["objective"] = res.objective_value
    report.data["projection_rms"] = res.fit.rms
    if args.family == "elliptic":
        target = 2 * args.D / args.G if args.G != 0 else float("nan")
        report.data["c2_star"] = res.param_squared
        report.data["c2_target"] = target
        report.check("c2_star.relative_error", abs(res.param_squared - target) / abs(target), 0.05)
        cmp_ = compare_with_we(V, res.fit, region, args.G, args.D)
        report.data["we_form"] = {"coefficients": cmp_.coefficients, "form_rms": cmp_.form_rms,
                                  "projection_rms": cmp_.floor, "literal_expression_rms": cmp_.expression_rms,
                                  "exact_form_floor": self_consistency_floor(region, res.param, args.G, args.D)}
        report.check("W.we_form_ratio", cmp_.ratio, 10.0)
        report.data["mu_identity"] = mu_identity_diagnostic(V, res.fit, [[1.0, 0.5], [0.4, 1.5], [1.8, -1.0]])
    _write_csv(out / f"stackel_{args.family}_objective.csv", ["param", "param_squared", "objective"],
               [[p, p * p, j] for p, j in res.curve])
    B, _, _ = member.design(X, Y)
    W = B @ res.fit.coefficients
    with open(out / f"stackel_{args.family}_W.json", "w") as fh:
        json.dump(_jsonable({"param": res.param, "x": X, "y": Y, "W": W,
                             "V": [V(np.array([x, y])) for x, y in zip(X, Y)]}), fh, sort_keys=True)


def run_flow(args, report: Report, out: Path):
    from .charts import cartesian
    from .fields import ScalarField
    from .flow import conservation_report, integrate_hamiltonian
    from .observables import MomentumPolynomial

    if not 1e-12 <= args.rel_tol <= 1e-3 or args.rel_tol / 2 < 1e-12:
        raise ConfigError("rel-tol must lie in [2e-12, 1e-3]")
    chart = cartesian(1)
    H = MomentumPolynomial(1, {(2,): 0.5, (0,): ScalarField(lambda q: 0.5 * q[0] ** 2, lambda q: np.array([q[0]]))})
    q0, p0 = [args.q0], [args.p0]
    traj = integrate_hamiltonian(H, chart, q0, p0, args.t_end, args.rel_tol)
    drift = conservation_report(traj, [H])[0]
    half = conservation_report(integrate_hamiltonian(H, chart, q0, p0, args.t_end, args.rel_tol / 2), [H])[0]
    report.check("energy.drift", drift, args.drift_tol)
    report.check("order.halving_ratio", drift / half if half > 0 else math.inf, 4.0, ">=")
    back = integrate_hamiltonian(H, chart, traj.q[-1], -traj.p[-1], args.t_end, args.rel_tol)
    err = max(abs(back.q[-1][0] - q0[0]), abs(back.p[-1][0] + p0[0]))
    report.check("time_reversal", err, 10 * args.rel_tol * args.t_end)
    report.data["stats"] = traj.stats
    traj.to_csv(out / "flow_oscillator.csv", ["q"], ["p"])


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sepcert", description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default=None,
                        help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    parser.add_argument("--seed", type=int, default=0, help="seed of the single random generator")
    # the shared options are accepted after the subcommand name as well
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")

    p = sub.add_parser("benenti", parents=[common], help="elliptic L-tensor hierarchy certification")
    p.add_argument("--c", type=positive_float, default=1.0, help="focal distance")
    p.add_argument("--axis", type=int, choices=(0, 1), default=0, help="coordinate axis carrying c^2 in L")
    p.add_argument("--strength", type=float, default=1.0, help="two-centre potential strength")
    p.add_argument("--omega", type=float, default=0.5, help="harmonic frequency added to the potential")
    p.add_argument("--samples", type=positive_int, default=100)
    p.set_defaults(run=run_benenti)

    p = sub.add_parser("sepcurve", parents=[common], help="Benenti family from a separation curve")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--points", type=positive_int, default=200)
    p.add_argument("--table-points", type=positive_int, default=5)
    p.add_argument("--grid", type=positive_int, default=256)
    p.set_defaults(run=run_sepcurve)

    p = sub.add_parser("henon-heiles", parents=[common], help="Cartesian form of the (2, 1, 4) family")
    p.add_argument("--points", type=positive_int, default=100)
    p.add_argument("--table-points", type=positive_int, default=5)
    p.set_defaults(run=run_henon_heiles)

    p = sub.add_parser("cofactor", parents=[common], help="triangular Newton system cofactor certification")
    p.add_argument("--region", type=float_list(4), default=[-1.0, 1.0, 0.1, 2.0], help="x1min,x1max,x2min,x2max")
    p.add_argument("--grid", type=positive_int, default=21)
    p.add_argument("--t-end", type=positive_float, default=10.0)
    p.set_defaults(run=run_cofactor)

    p = sub.add_parser("superint3", parents=[common], help="superintegrable three bodies on a line")
    p.add_argument("--potential", choices=("calogero", "wolfes", "new"), default="calogero")
    p.add_argument("--k", type=float_list(3), default=[1.0, 1.0, 1.0], help="couplings k1,k2,k3")
    p.add_argument("--x0", type=float_list(3), default=None, help="initial positions")
    p.add_argument("--v0", type=float_list(3), default=[0.1, -0.2, 0.1], help="initial velocities")
    p.add_argument("--t-end", type=positive_float, default=5.0)
    p.add_argument("--rel-tol", type=positive_float, default=1e-8)
    p.add_argument("--points", type=positive_int, default=20)
    p.add_argument("--bracket-points", type=positive_int, default=100)
    p.set_defaults(run=run_superint3)

    p = sub.add_parser("stackel-fit", parents=[common], help="best separable approximation of the quadrupole potential")
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--D", type=float, default=0.1)
    p.add_argument("--r-min", type=positive_float, default=0.8)
    p.add_argument("--r-max", type=positive_float, default=2.5)
    p.add_argument("--nr", type=positive_int, default=24)
    p.add_argument("--ntheta", type=positive_int, default=96)
    p.add_argument("--family", choices=("elliptic", "polar", "parabolic"), default="elliptic")
    p.add_argument("--c2-min", type=positive_float, default=0.02)
    p.add_argument("--c2-max", type=positive_float, default=0.6)
    p.add_argument("--param-min", type=float, default=-0.5, help="shift range for polar/parabolic")
    p.add_argument("--param-max", type=float, default=0.5)
    p.add_argument("--scan", type=positive_int, default=25, help="coarse scan points")
    p.set_defaults(run=run_stackel_fit)

    p = sub.add_parser("flow", parents=[common], help="integrator self-tests on the harmonic oscillator")
    p.add_argument("--q0", type=float, default=1.0)
    p.add_argument("--p0", type=float, default=0.0)
    p.add_argument("--t-end", type=positive_float, default=100.0)
    p.add_argument("--rel-tol", type=positive_float, default=1e-10)
    p.add_argument("--drift-tol", type=positive_float, default=1e-8)
    p.set_defaults(run=run_flow)
    return parser


def output_dir(arg) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("run", "out_dir")}
    report = Report(args.subcommand, config)
    try:
        out = output_dir(args.out_dir)
        args.run(args, report, out)
    except ConfigError as exc:
        print(f"sepcert: error: {exc}", file=sys.stderr)
        return 2
    name = args.subcommand.replace("-", "_")
    (out / f"{name}_report.json").write_text(report.to_json())
    for c in report.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check_id']}: {c['value']} {c['relation']} {c['tolerance']}")
    print(f"report: {out / (name + '_report.json')}")
    return 0 if report.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
