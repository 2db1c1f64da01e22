"""Command-line front end.

Every run is a pure function of (subcommand, parameters, seed); outputs are
written as CSV or JSON and, when ``--out`` names a file, a manifest with
SHA-256 checksums is written next to it so the run can be replayed.

Exit codes: 0 pass, 1 a test failed, 2 usage error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import classical as cl
from . import qkr
from . import rmt
from . import wigner as wg
from .numerics import (
    ContractError,
    InsufficientDataError,
    NumericalError,
    ResourceLimitError,
    RngStream,
    is_power_of_two,
    parallel_map,
)
from .reports import TestReport, dumps_json, format_csv, histogram_rows

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- validators

def _positive_float(text):
    v = float(text)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return v


def _power_of_two(text):
    v = int(text)
    if not is_power_of_two(v) or v < 4:
        raise argparse.ArgumentTypeError(f"must be a power of two >= 4, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"must be a 64-bit unsigned integer, got {text}")
    return v


def _rect(text):
    try:
        cl.parse_rect(text)
    except ContractError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _map_kind(text):
    try:
        return cl.MapSpec(text).kind
    except ContractError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError(f"expected non-negative integers, got {text}")
    return ",".join(str(v) for v in vals)


def _float_list(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text}") from None
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return ",".join(repr(v) for v in vals)


def _probability_list(text):
    out = _float_list(text)
    if any(not 0 < float(v) < 0.5 for v in out.split(",")):
        raise argparse.ArgumentTypeError(f"probabilities must lie in (0, 1/2), got {text}")
    return out


def _probability(text):
    v = float(text)
    if not 0 < v < 0.5:
        raise argparse.ArgumentTypeError(f"probability must lie in (0, 1/2), got {text}")
    return v


def _window(text):
    try:
        a, b = (int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected m1,m2, got {text}") from None
    if b < a:
        raise argparse.ArgumentTypeError(f"empty window {text}")
    return f"{a},{b}"


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options")
    g.add_argument("--seed", type=_seed, default=0, help="64-bit seed (default 0)")
    g.add_argument("--out", default=None, help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    g.add_argument("--config", default=None, help="key=value file; command-line flags take precedence")
    g.add_argument("--manifest", default=None, help="manifest path (default <out>.manifest.json)")
    return p


def _qkr_flags(p, lam_type=_positive_float, lam=10.0, N=256, hbar=0.25):
    p.add_argument("--N", type=_power_of_two, default=N, help=f"basis size, power of two (default {N})")
    p.add_argument("--lambda", dest="lam", type=lam_type, default=lam, help=f"kick strength (default {lam})")
    p.add_argument("--tau", type=_positive_float, default=1.0, help="kick period (default 1)")
    p.add_argument("--hbar", type=_positive_float, default=hbar, help=f"effective hbar (default {hbar})")
    p.add_argument("--kick-shift", type=float, default=0.0, help="phase offset of the kick in radians (default 0)")
    p.add_argument("--half-kinetic", type=_bool, nargs="?", const=True, default=False,
                   help="use L^2/2 instead of L^2 (default false)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="spectramix", description="Mixing, dephasing, phase-space and random-matrix experiments.")
    parser.add_argument("--version", action="version", version=f"spectramix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(container, name, help_text, key):
        p = container.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(_key=key, _parser=p)
        return p

    p = leaf(sub, "mixing", "correlation C(T_t A, B) against t", "mixing")
    p.add_argument("--map", type=_map_kind, default="arnold_cat", help="baker | cat | standard (default cat)")
    p.add_argument("--K", type=float, default=10.0, help="standard-map kick strength (default 10)")
    p.add_argument("--set-a", type=_rect, default="rect:0,0.5,0,1", help="set A as rect:q0,q1,p0,p1")
    p.add_argument("--set-b", type=_rect, default="rect:0,0.5,0,1", help="set B as rect:q0,q1,p0,p1")
    p.add_argument("--t-max", type=_nonneg_int, default=20, help="last time step (default 20)")
    p.add_argument("--grid", type=_positive_int, default=1024, help="grid resolution (default 1024)")

    p = leaf(sub, "factorization", "time-separated factorization defect against offset gap", "factorization")
    p.add_argument("--map", type=_map_kind, default="arnold_cat", help="baker | cat | standard (default cat)")
    p.add_argument("--K", type=float, default=10.0, help="standard-map kick strength (default 10)")
    p.add_argument("--set-a", type=_rect, default="rect:0,0.5,0,1", help="first set (default left half)")
    p.add_argument("--set-b", type=_rect, default="rect:0,1,0,0.5", help="second set (default bottom half)")
    p.add_argument("--gaps", type=_int_list, default="0,2,4,8,12", help="offset gaps (default 0,2,4,8,12)")
    p.add_argument("--grid", type=_positive_int, default=1024, help="grid resolution (default 1024)")
    p.add_argument("--tolerance", type=_positive_float, default=0.05, help="bound for the largest gap (default 0.05)")

    p = leaf(sub, "ulam", "Ulam transfer matrix, invariant density and stochasticity report", "ulam")
    p.add_argument("--map", type=_map_kind, default="arnold_cat", help="baker | cat | standard (default cat)")
    p.add_argument("--K", type=float, default=10.0, help="standard-map kick strength (default 10)")
    p.add_argument("--grid", type=_positive_int, default=64, help="grid resolution, at most 256 (default 64)")
    p.add_argument("--subsamples", type=_positive_int, default=8, help="sub-points per cell side (default 8)")

    q = sub.add_parser("qkr", help="kicked rotator simulations")
    qs = q.add_subparsers(dest="mode", required=True)
    p = leaf(qs, "correlation", "spectral-sum correlation of a momentum-window projector", "qkr correlation")
    _qkr_flags(p)
    p.add_argument("--m0", type=int, default=0, help="initial momentum eigenstate (default 0)")
    p.add_argument("--window", type=_window, default="-10,10", help="projector window m1,m2 (default -10,10)")
    p.add_argument("--kicks", type=_nonneg_int, default=1000, help="last kick count (default 1000)")
    p = leaf(qs, "spread", "<L^2> after each kick by split-step propagation", "qkr spread")
    _qkr_flags(p)
    p.add_argument("--m0", type=int, default=0, help="initial momentum eigenstate (default 0)")
    p.add_argument("--kicks", type=_nonneg_int, default=1000, help="number of kicks (default 1000)")
    p = leaf(qs, "spectrum", "Floquet phases", "qkr spectrum")
    _qkr_flags(p)

    w = sub.add_parser("wigner", help="phase-space checks and exports")
    ws = w.add_subparsers(dest="mode", required=True)
    p = leaf(ws, "checks", "trace rule, Moyal scaling, covariance and fixed-point checks", "wigner checks")
    p.add_argument("--pairs", type=_positive_int, default=100, help="random trace-rule pairs (default 100)")
    p.add_argument("--N", type=_power_of_two, default=128, help="trace-rule grid size (default 128)")
    p.add_argument("--cov-N", type=_power_of_two, default=256, help="covariance grid size (default 256)")
    p.add_argument("--hbar", type=_positive_float, default=0.1, help="hbar for trace and covariance checks (default 0.1)")
    p = leaf(ws, "export", "Wigner function of a coherent state", "wigner export")
    p.add_argument("--N", type=_power_of_two, default=128, help="grid size (default 128)")
    p.add_argument("--hbar", type=_positive_float, default=0.1, help="hbar (default 0.1)")
    p.add_argument("--q0", type=float, default=0.0, help="packet centre q (default 0)")
    p.add_argument("--p0", type=float, default=0.0, help="packet centre p (default 0)")
    p.add_argument("--raw", type=_bool, nargs="?", const=True, default=False,
                   help="write little-endian float64 plus .hdr sidecar instead of text (needs --out)")

    r = sub.add_parser("rmt", help="Gaussian-ensemble tests")
    rs = r.add_subparsers(dest="mode", required=True)
    for mode, text in (("sample", "eigenvalue histogram of an ensemble"),
                       ("randomness", "independence of matrix entries"),
                       ("invariance", "invariance under Haar conjugation"),
                       ("spacing", "unfolded spacing distribution against the surmise")):
        p = leaf(rs, mode, text, f"rmt {mode}")
        p.add_argument("--ensemble", choices=("goe", "gue", "gse"), default="goe", help="ensemble (default goe)")
        p.add_argument("--n", type=_positive_int, default=None,
                       help="matrix size (default 200 for spacing and sample, 8 otherwise)")
        p.add_argument("--samples", type=_positive_int, default=None,
                       help="number of matrices (default 200 for spacing and sample, 10000 otherwise)")
        if mode in ("sample", "spacing"):
            p.add_argument("--bins", type=_positive_int, default=40, help="histogram bins (default 40)")
        if mode == "spacing":
            p.add_argument("--method", choices=("semicircle", "polynomial"), default="semicircle",
                           help="unfolding method (default semicircle)")
            p.add_argument("--bulk", type=_positive_float, default=0.5, help="central level fraction (default 0.5)")
        if mode == "invariance":
            p.add_argument("--rotations", type=_positive_int, default=32,
                           help="Haar conjugations per matrix (default 32)")
        if mode in ("randomness", "invariance"):
            p.add_argument("--adversarial", choices=("none", "uniform", "copied"), default="none",
                           help="replace the ensemble by a documented non-Gaussian one (default none)")

    p = leaf(sub, "appendix-e", "projector construction reproducing given probabilities", "appendix-e")
    p.add_argument("--p", type=_probability_list, default="0.1,0.2,0.3", help="marginal probabilities")
    p.add_argument("--p-joint", type=_probability, default=0.25, help="joint probability (default 0.25)")
    p.add_argument("--dim", type=_positive_int, default=3, help="Hilbert-space dimension >= 3 (default 3)")
    p.add_argument("--alpha", type=_nonneg_float, default=None, help="override alpha")
    p.add_argument("--beta", type=_positive_float, default=None, help="override beta")
    p.add_argument("--trials", type=_nonneg_int, default=0, help="extra random valid inputs to verify (default 0)")

    p = leaf(sub, "bgs", "kicked-rotator quasienergy spacings against GOE and Poisson", "bgs")
    p.add_argument("--N", type=_power_of_two, default=512, help="basis size (default 512)")
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=10.0, help="kick strength (default 10)")
    p.add_argument("--hbar", type=_positive_float, default=0.1, help="effective hbar (default 0.1)")
    p.add_argument("--taus", type=_float_list, default="0.7,1.0,1.3", help="pooled kick periods")
    p.add_argument("--kick-shift", type=float, default=None, help="kick phase offset (default 0.3*2pi/N)")
    p.add_argument("--expect", choices=("goe", "poisson"), default="goe", help="expected verdict (default goe)")

    p = sub.add_parser("replay", help="re-run a manifest and compare checksums")
    p.add_argument("manifest_path", help="manifest JSON written by an earlier run")
    p.set_defaults(_key="replay", _parser=p)
    return parser


RUN_OPTIONS = ("seed", "out", "format", "config", "manifest")
_INTERNAL = ("_key", "_parser", "command", "mode", "manifest_path")


def parameters(ns: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(ns).items()) if k not in RUN_OPTIONS and k not in _INTERNAL}


def _apply_config(parser, argv, ns):
    leaf = ns._parser
    try:
        text = Path(ns.config).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {ns.config}: {exc}") from None
    actions = {a.dest: a for a in leaf._actions}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        dest = {"lambda": "lam"}.get(dest, dest)
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        conv = action.type or (lambda v: v)
        try:
            updates[dest] = conv(value)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and updates[dest] not in action.choices:
            raise UsageError(f"config key {key!r}: invalid choice {value!r}")
    leaf.set_defaults(**updates)
    return parser.parse_args(argv)


def parse_args(argv=None) -> argparse.Namespace:
    """Parse and validate; argparse exits with status 2 on usage errors."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = parser.parse_args(argv)
    if getattr(ns, "config", None):
        ns = _apply_config(parser, argv, ns)
    return ns


# ---------------------------------------------------------------- runs

@dataclass
class RunResult:
    primary: str | bytes
    status: int = EXIT_OK
    sidecars: dict = field(default_factory=dict)  # suffix -> text


def _table(ns, header, rows, json_obj=None) -> str:
    if ns.format == "json":
        return dumps_json(json_obj if json_obj is not None else [dict(zip(header, r)) for r in rows])
    return format_csv(header, rows)


def _reports_out(ns, reports) -> RunResult:
    reports = list(reports)
    status = EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL
    if ns.format == "json":
        body = reports[0] if len(reports) == 1 else reports
        return RunResult(dumps_json(body), status)
    rows = [[r.to_dict()[k] for k in ("test", "statistic", "threshold", "pass", "samples", "seed")] for r in reports]
    return RunResult(format_csv(["test", "statistic", "threshold", "pass", "samples", "seed"], rows), status)


def run_mixing(ns):
    spec = cl.MapSpec(ns.map, ns.K)
    A = cl.GridMask.parse(ns.set_a, ns.grid)
    B = cl.GridMask.parse(ns.set_b, ns.grid)
    C = cl.mixing_scan(spec, A, B, ns.t_max, ns.grid)
    rows = [(t, float(c)) for t, c in enumerate(C)]
    return RunResult(_table(ns, ["t", "correlation"], rows))


def run_factorization(ns):
    spec = cl.MapSpec(ns.map, ns.K)
    n = ns.grid
    A = cl.GridMask.parse(ns.set_a, n)
    B = cl.GridMask.parse(ns.set_b, n)
    f = cl.GridDensity.uniform(n)
    gaps = _ints(ns.gaps)
    literal = cl.literal_factorization_defect(f, [A, B])
    separated = parallel_map(lambda g: cl.factorization_defect(spec, f, [A, B], [0, g]), gaps)
    rows = [(g, d, literal) for g, d in zip(gaps, separated)]
    status = EXIT_OK if separated[int(np.argmax(gaps))] < ns.tolerance else EXIT_FAIL
    return RunResult(_table(ns, ["gap", "separated_defect", "literal_defect"], rows), status)


def run_ulam(ns):
    spec = cl.MapSpec(ns.map, ns.K)
    T = cl.ulam_transfer_matrix(spec, ns.grid, ns.subsamples)
    f = cl.invariant_density(T)
    rep = cl.stochasticity_report(T, f)
    report = {
        "map": spec.kind, "grid": T.n, "subsamples": T.subsamples,
        "column_defect": rep.column_defect, "row_defect": rep.row_defect,
        "leading_eigenvalue": rep.leading_eigenvalue, "fixed_point_residual": rep.fixed_point_residual,
        "density_uniformity": rep.density_uniformity, "pass": rep.passed,
    }
    status = EXIT_OK if rep.passed else EXIT_FAIL
    c = (np.arange(T.n) + 0.5) / T.n
    if ns.format == "json":
        return RunResult(dumps_json({"stochasticity": report, "density": f.values}), status)
    rows = [(c[i], c[j], f.values[i, j]) for i in range(T.n) for j in range(T.n)]
    return RunResult(format_csv(["q", "p", "density"], rows), status, {".stochasticity.json": dumps_json(report)})


def _qkr_config(ns) -> qkr.QkrConfig:
    return qkr.QkrConfig(ns.N, ns.lam, ns.tau, ns.hbar, ns.kick_shift, bool(ns.half_kinetic))


def run_qkr(ns):
    cfg = _qkr_config(ns)
    if ns.mode == "spectrum":
        basis = qkr.floquet_eigensystem(qkr.build_floquet(cfg))
        rows = list(enumerate(basis.phases.tolist()))
        obj = {"phases": basis.phases, "degenerate": basis.degenerate, "min_gap": basis.min_gap}
        return RunResult(_table(ns, ["index", "phase"], rows, obj))
    if not -cfg.N // 2 <= ns.m0 < cfg.N // 2:
        raise UsageError(f"argument --m0: outside the basis [-{cfg.N // 2}, {cfg.N // 2 - 1}]")
    psi0 = qkr.momentum_state(cfg.N, ns.m0)
    if ns.mode == "spread":
        L2 = qkr.momentum_spread(psi0, cfg, ns.kicks)
        return RunResult(_table(ns, ["kick", "L2"], [(k, float(v)) for k, v in enumerate(L2)]))
    m1, m2 = _ints(ns.window)
    basis = qkr.floquet_eigensystem(qkr.build_floquet(cfg))
    O = qkr.momentum_window_projector(cfg.N, m1, m2)
    C = qkr.quantum_correlation_series(qkr.DensityMatrix.pure(psi0), O, np.arange(ns.kicks + 1), basis)
    label = f"P[{m1},{m2}]"
    return RunResult(_table(ns, ["kick", "observable", "value"], [(k, label, float(c.real)) for k, c in enumerate(C)]))


def wigner_checks(pairs=100, N=128, cov_N=256, hbar=0.1, seed=0) -> list[TestReport]:
    """The phase-space checks as reports: trace rule, Moyal slope, covariance, fixed point."""
    reports = []
    g = wg.PhaseGrid.symmetric(N, hbar)
    basis = wg.oscillator_eigenstates(g, 8)
    rng = RngStream(seed, 0x3A9)
    worst = 0.0
    for i in range(pairs):
        gen = rng.substream(i).generator
        X = gen.standard_normal((8, 8)) + 1j * gen.standard_normal((8, 8))
        r = X @ X.conj().T
        r /= np.trace(r).real
        Y = gen.standard_normal((8, 8)) + 1j * gen.standard_normal((8, 8))
        o = (Y + Y.conj().T) / 2
        R, O = basis @ r @ basis.conj().T, basis @ o @ basis.conj().T
        err = abs(wg.phase_space_expectation(R, O, g) - np.trace(R @ O)) / np.max(np.abs(O))
        worst = max(worst, float(err))
    reports.append(TestReport("trace_rule", worst, 1e-8, pairs, seed))

    slope, _ = wg.moyal_slope(lambda gr: (wg.position_operator(gr), wg.momentum_operator(gr)))
    reports.append(TestReport("moyal_slope_qp", abs(slope - 1.0), 0.3, 4, seed, {"slope": slope}))

    gc = wg.PhaseGrid.symmetric(cov_N, hbar)
    psi = wg.coherent_state(gc, 1.0, 0.5)
    A = np.outer(psi, psi.conj())
    cov = wg.weyl_covariance_defect(A, np.pi / 2, "harmonic_oscillator", gc)
    reports.append(TestReport("covariance_ho", cov, 1e-3, 1, seed))
    ground = wg.coherent_state(gc)
    fp = wg.fp_fixed_point_defect(np.outer(ground, ground.conj()), "harmonic_oscillator", gc, 0.7)
    reports.append(TestReport("fixed_point_ho", fp, 1e-3, 1, seed))
    return reports


def run_wigner(ns):
    if ns.mode == "checks":
        return _reports_out(ns, wigner_checks(ns.pairs, ns.N, ns.cov_N, ns.hbar, ns.seed))
    g = wg.PhaseGrid.symmetric(ns.N, ns.hbar)
    psi = wg.coherent_state(g, ns.q0, ns.p0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wg.BandLimitWarning)
        W = wg.wigner_function(np.outer(psi, psi.conj()), g)
    if ns.raw:
        if ns.out is None:
            raise UsageError("argument --raw: requires --out")
        header = f"N={g.N}\nq_min={g.q_min!r}\nq_max={g.q_max!r}\nhbar={g.hbar!r}\n"
        return RunResult(W.values.real.astype("<f8").tobytes(), sidecars={".hdr": header})
    Q, P = g.mesh()
    rows = zip(Q.ravel().tolist(), P.ravel().tolist(), W.values.real.ravel().tolist())
    return RunResult(_table(ns, ["q", "p", "value"], list(rows)))


def _rmt_defaults(ns):
    big = ns.mode in ("spacing", "sample")
    n = ns.n if ns.n is not None else (200 if big else 8)
    S = ns.samples if ns.samples is not None else (200 if big else 10000)
    return n, S


def run_rmt(ns):
    n, S = _rmt_defaults(ns)
    rng = RngStream(ns.seed)
    kind = rmt.ensemble_kind(ns.ensemble)
    adversarial = getattr(ns, "adversarial", "none")
    if adversarial == "uniform":
        samples = rmt.uniform_symmetric_batch(n, S, rng.substream(1))
        kind = rmt.EnsembleKind.GOE
    elif adversarial == "copied":
        samples = rmt.copied_entry_batch(n, S, rng.substream(1))
        kind = rmt.EnsembleKind.GOE
    else:
        samples = rmt.sample_batch(kind, n, S, rng.substream(1))

    if ns.mode == "randomness":
        return _reports_out(ns, [rmt.randomness_test(samples, ns.seed, kind)])
    if ns.mode == "invariance":
        return _reports_out(ns, [rmt.invariance_test(samples, kind, rng.substream(2),
                                                     rotations_per_matrix=ns.rotations)])
    if ns.mode == "spacing":
        s = rmt.ensemble_spacings(samples, ns.method, ns.bulk)
        report = rmt.spacing_test(s, kind.beta, ns.seed)
        status = EXIT_OK if report.passed else EXIT_FAIL
        if ns.format == "json":
            return RunResult(dumps_json(report), status)
        hist = histogram_rows(s, ns.bins, (0.0, 4.0))
        return RunResult(format_csv(["bin_left", "bin_right", "density"], hist), status,
                         {".report.json": dumps_json(report)})
    # sample
    ev = np.concatenate([np.linalg.eigvalsh(s.H) for s in samples])
    H = np.stack([s.H for s in samples])
    summary = {
        "ensemble": kind.value, "n": n, "samples": S,
        "symmetry_defect": float(np.max(np.abs(H - np.swapaxes(H, -1, -2).conj()))),
        "var_H11": float(np.var(H[:, 0, 0].real)), "var_ReH12": float(np.var(H[:, 0, 1].real)),
    }
    if ns.format == "json":
        return RunResult(dumps_json(summary))
    return RunResult(format_csv(["bin_left", "bin_right", "density"], histogram_rows(ev, ns.bins)),
                     sidecars={".summary.json": dumps_json(summary)})


def run_appendix_e(ns):
    p = _floats(ns.p)
    c = rmt.weak_limit_construction(p, ns.p_joint, ns.dim, ns.alpha, ns.beta)
    body = c.to_dict()
    worst = max(*c.trace_defects(), c.idempotency_defect())
    if ns.trials:
        gen = RngStream(ns.seed, 0xE).generator
        for _ in range(ns.trials):
            k = int(gen.integers(1, 6))
            probs = gen.uniform(0.01, 0.49, k + 1)
            t = rmt.weak_limit_construction(probs[:-1], probs[-1], int(gen.integers(3, 8)))
            worst = max(worst, *t.trace_defects(), t.idempotency_defect())
    body["trials"] = ns.trials
    body["worst_identity_defect"] = worst
    body["pass"] = worst < 1e-12
    status = EXIT_OK if body["pass"] else EXIT_FAIL
    if ns.format == "json":
        return RunResult(dumps_json(body), status)
    rows = [(k, json.dumps(v, default=lambda x: x.tolist())) for k, v in sorted(body.items())]
    return RunResult(format_csv(["key", "value"], rows), status)


def bgs_phases(N, lam, hbar, taus, kick_shift=None):
    """Floquet phases of the kicked rotator at several kick periods."""
    shift = 0.3 * 2 * np.pi / N if kick_shift is None else kick_shift

    def one(tau):
        cfg = qkr.QkrConfig(N, lam, tau, hbar, shift)
        return qkr.floquet_eigensystem(qkr.build_floquet(cfg)).phases

    return parallel_map(one, taus)


def run_bgs(ns):
    spectra = bgs_phases(ns.N, ns.lam, ns.hbar, _floats(ns.taus), ns.kick_shift)
    reports = rmt.bgs_spacing_check(spectra, RngStream(ns.seed))
    verdict = rmt.bgs_verdict(reports)
    result = _reports_out(ns, reports)
    result.status = EXIT_OK if verdict == ns.expect else EXIT_FAIL
    return result


RUNNERS = {
    "mixing": run_mixing,
    "factorization": run_factorization,
    "ulam": run_ulam,
    "qkr correlation": run_qkr,
    "qkr spread": run_qkr,
    "qkr spectrum": run_qkr,
    "wigner checks": run_wigner,
    "wigner export": run_wigner,
    "rmt sample": run_rmt,
    "rmt randomness": run_rmt,
    "rmt invariance": run_rmt,
    "rmt spacing": run_rmt,
    "appendix-e": run_appendix_e,
    "bgs": run_bgs,
}


def run_experiment(ns: argparse.Namespace) -> RunResult:
    return RUNNERS[ns._key](ns)


# ---------------------------------------------------------------- output and manifests

def _bytes(data) -> bytes:
    return data if isinstance(data, bytes) else data.encode()


def _write(path: Path, data) -> None:
    path.write_bytes(_bytes(data))


def emit(ns, result: RunResult) -> dict:
    """Write outputs; return {file name: sha256} for files written."""
    checksums = {}
    if ns.out is None:
        sys.stdout.write(result.primary if isinstance(result.primary, str) else result.primary.decode("latin-1"))
        for text in result.sidecars.values():
            sys.stderr.write(text)
        return checksums
    out = Path(ns.out)
    files = {out: result.primary}
    files.update({out.with_name(out.name + suffix): data for suffix, data in result.sidecars.items()})
    for path, data in files.items():
        _write(path, data)
        checksums[path.name] = hashlib.sha256(_bytes(data)).hexdigest()
    return checksums


def manifest_dict(ns, checksums: dict) -> dict:
    return {
        "subcommand": ns._key,
        "parameters": parameters(ns),
        "seed": ns.seed,
        "format": ns.format,
        "output": Path(ns.out).name if ns.out else None,
        "version": __version__,
        "outputs": dict(sorted(checksums.items())),
    }


def write_manifest(ns, checksums: dict) -> Path | None:
    if ns.manifest is None and ns.out is None:
        return None
    path = Path(ns.manifest) if ns.manifest else Path(ns.out + ".manifest.json")
    path.write_text(dumps_json(manifest_dict(ns, checksums)))
    return path


def _namespace_from_manifest(data) -> argparse.Namespace:
    if not isinstance(data, dict):
        raise UsageError("manifest must be a JSON object")
    for key in ("subcommand", "parameters", "seed", "format", "outputs", "output"):
        if key not in data:
            raise UsageError(f"manifest lacks {key!r}")
    key = data["subcommand"]
    if key not in RUNNERS:
        raise UsageError(f"manifest names unknown subcommand {key!r}")
    if not isinstance(data["parameters"], dict) or not isinstance(data["outputs"], dict):
        raise UsageError("manifest parameters and outputs must be objects")
    argv = key.split() + ["--seed", str(data["seed"]), "--format", str(data["format"])]
    ns = build_parser().parse_args(argv)
    expected = parameters(ns)
    for name, value in data["parameters"].items():
        if name not in expected:
            raise UsageError(f"manifest parameter {name!r} is not accepted by {key}")
        action = next(a for a in ns._parser._actions if a.dest == name)
        if value is not None and action.type is not None:
            try:
                value = action.type(str(value) if not isinstance(value, bool) else str(value).lower())
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"manifest parameter {name!r}: {exc}") from None
        setattr(ns, name, value)
    return ns


def replay(manifest_path: str) -> int:
    try:
        data = json.loads(Path(manifest_path).read_text())
    except OSError as exc:
        print(f"spectramix: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"spectramix: corrupted manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ns = _namespace_from_manifest(data)
    except (UsageError, SystemExit) as exc:
        print(f"spectramix: corrupted manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not data["output"]:
        print("spectramix: manifest records no output file", file=sys.stderr)
        return EXIT_USAGE
    with tempfile.TemporaryDirectory() as tmp:
        ns.out = str(Path(tmp) / data["output"])
        ns.manifest = None
        result = run_experiment(ns)
        checksums = emit(ns, result)
    if checksums == data["outputs"]:
        print(f"replay ok: {len(checksums)} output(s) match")
        return EXIT_OK
    for name in sorted(set(checksums) | set(data["outputs"])):
        if checksums.get(name) != data["outputs"].get(name):
            print(f"checksum mismatch: {name}", file=sys.stderr)
    return EXIT_FAIL


def main(argv=None) -> int:
    try:
        ns = parse_args(argv)
    except UsageError as exc:
        print(f"spectramix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if ns._key == "replay":
        return replay(ns.manifest_path)
    try:
        result = run_experiment(ns)
        checksums = emit(ns, result)
        write_manifest(ns, checksums)
    except (UsageError, ContractError, InsufficientDataError, ResourceLimitError) as exc:
        print(f"spectramix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"spectramix: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"spectramix: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return result.status


if __name__ == "__main__":
    sys.exit(main())
