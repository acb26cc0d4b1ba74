"""Command-line front end: ``boxball <subcommand> [flags]``.

Parameters may also come from ``--config FILE`` holding ``key = value``
lines (flag names without dashes); flags given on the command line win.
Every output starts with a manifest (a ``#`` comment line in CSV, a
``manifest`` key in JSON) holding the full parameter set and master seed.
Exit status: 0 on success, 2 on invalid parameters, 3 on runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from decimal import Decimal, InvalidOperation
from typing import Sequence

import numpy as np

from . import __version__, dynamics, ldf, measure, tba, transfer
from .ensembles import Gge2tSpec, IidSpec, az_to_temperatures, parse_kv, sample_iid, temperatures_to_az
from .errors import BoxBallError, DomainError, NonSaturatedSpectrum

__all__ = ["main", "run", "build_parser"]

SUBCOMMANDS = (
    "evolve", "energies", "tba", "drude", "correlations", "flux-jacobian", "ldf", "ldf2t",
    "transfer-matrix", "measure-cumulants", "measure-histogram", "measure-correlation",
    "measure-pseudoenergy", "sum-rule-check",
)


class ValidationError(Exception):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else _fmt(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _capacity(text: str):
    if text.lower() in ("inf", "infinity", "oo"):
        return tba.INF
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"capacity must be a positive integer or 'inf', got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("capacity must be at least 1")
    return v


def _capacities(text: str):
    return [_capacity(t) for t in text.split(",") if t.strip()]


def _grid(text: str):
    # decimal arithmetic keeps 0.1:1.5:0.01 on exact decimal points
    try:
        name, rng = text.split("=", 1)
        lo, hi, step = (Decimal(x.strip()) for x in rng.split(":"))
    except (ValueError, InvalidOperation):
        raise argparse.ArgumentTypeError(f"grid must look like name=start:stop:step, got {text!r}")
    if not all(v.is_finite() for v in (lo, hi, step)) or step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("grid needs finite values, step > 0 and stop >= start")
    n = int((hi - lo) // step) + 1
    return name.strip(), [float(lo + k * step) for k in range(n)]


# ---------------------------------------------------------------- parser

def _add_output(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    p.add_argument("--out", default="-", help="output file, '-' for stdout")


def _add_state(p, capacity=True):
    g = p.add_argument_group("ensemble")
    g.add_argument("--density", type=float, help="ball density p in [0, 1/2) (i.i.d. state)")
    g.add_argument("--fugacity", type=float, help="fugacity z = p/(1-p) (i.i.d. state)")
    g.add_argument("--beta1", type=float, help="inverse temperature coupled to E_1, the soliton number")
    g.add_argument("--beta-inf", type=float, dest="beta_inf",
                   help="inverse temperature coupled to the ball number (z = exp(-beta_inf))")
    if capacity:
        p.add_argument("--capacity", type=_capacity, required=True, help="carrier capacity l (integer or 'inf')")


def _add_mc(p, timed=True):
    p.add_argument("--length", type=int, required=True, help="ring length L in sites")
    if timed:
        p.add_argument("--time", type=int, required=True, help="time horizon t in steps of T_l")
    p.add_argument("--samples", type=int, required=True, help="number of random initial states")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $BOXBALL_WORKERS or 1)")
    p.add_argument("--allow-wrap", action="store_true",
                   help="permit L below the no-wrap bound 2 * 1.2 * v_max * t")
    p.add_argument("--burn-in", type=int, default=None, help="Metropolis burn-in flips (GGE only, default 20 L)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boxball", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("evolve", help="apply T_l to a state and print the carrier trace")
    p.description = ("Apply the capacity-l carrier evolution T_l. Prints the state after each step, "
                     "the per-site carrier loads (balls on the bond entering each site) and the exit load.")
    p.add_argument("--state", help="configuration as a 0/1 string")
    p.add_argument("--length", type=int, help="ring length for a random i.i.d. state")
    p.add_argument("--density", type=float, help="ball density for a random state")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--capacity", type=_capacity, required=True, help="carrier capacity l")
    p.add_argument("--steps", type=int, default=1, help="number of T_l applications")
    _add_output(p)

    p = sub.add_parser("energies", help="conserved energies E_k, soliton content, pseudoenergies")
    p.description = ("Energies E_1..E_K (pickup counts of periodic capacity-k carriers), soliton "
                     "multiplicities m_k and pseudoenergies -ln((2E_i-E_(i-1)-E_(i+1))/(L-2E_i)) where defined.")
    p.add_argument("--state", help="configuration as a 0/1 string")
    p.add_argument("--length", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncation", type=int, default=None, help="largest k (default: until saturated)")
    _add_output(p)

    p = sub.add_parser("tba", help="soliton densities, hole densities and effective velocities")
    p.description = ("Per soliton size k: density rho_k and hole density sigma_k (per site), "
                     "y_k = rho_k/sigma_k, and effective velocity v_k under T_l (sites per step).")
    _add_state(p)
    p.add_argument("--truncation", type=int, default=20, help="number of soliton sizes K")
    _add_output(p)

    p = sub.add_parser("drude", help="Drude weight of the ball current")
    p.description = ("Drude weight D of the ball current under T_l, per site in units of (balls per step)^2, "
                     "with the mean ball and soliton currents (per step) and the scaled variance c2 of N_t.")
    _add_state(p)
    _add_output(p)

    p = sub.add_parser("correlations", help="four-index generalized current correlation C^{l,m}_{i,j}")
    p.description = ("Static generalized current correlations C^{l,m}_{i,j}, symmetric in all four "
                     "indices. 'inf' indices are summed as series unless --inf-proxy is given.")
    _add_state(p, capacity=False)
    p.add_argument("--indices", required=True, help="comma list i,j,l,m (integers or 'inf')")
    p.add_argument("--inf-proxy", type=int, default=None, help="replace 'inf' indices by this integer")
    _add_output(p)

    p = sub.add_parser("flux-jacobian", help="flux Jacobian A^(l) truncated at K")
    p.description = "Flux Jacobian A^(l) (derivatives of hole currents by hole densities), K x K."
    _add_state(p)
    p.add_argument("--truncation", type=int, default=None, help="K >= l (default l + 2)")
    _add_output(p)

    p = sub.add_parser("ldf", help="SCGF F(lambda) or rate function G(j) of transferred balls")
    p.description = ("Scaled cumulant generating function F(lambda) of the number of balls crossing "
                     "a bond per step (grid lambda=...), or its Legendre transform G(j) with the "
                     "conjugate field lambda* (grid j=..., j in balls per step).")
    _add_state(p)
    p.add_argument("--grid", type=_grid, required=True, help="lambda=a:b:step or j=a:b:step")
    _add_output(p)

    p = sub.add_parser("ldf2t", help="joint SCGF of ball and soliton currents, two-temperature state")
    p.description = ("Joint SCGF F(lambda, mu) of balls and solitons crossing a bond per step, with "
                     "its gradient (the two shifted mean currents), over a lambda grid at fixed mu.")
    _add_state(p)
    p.add_argument("--grid", type=_grid, required=True, help="lambda=a:b:step")
    p.add_argument("--mu", type=float, default=0.0, help="counting field of solitons")
    _add_output(p)

    p = sub.add_parser("transfer-matrix", help="equal-time current variance f from the carrier matrix")
    p.description = ("Equal-time integrated current correlation f per site from the leading eigenvalue of "
                     "the carrier transfer matrix, the conjectured closed form, and c2 from a mixed derivative.")
    g = p.add_argument_group("state")
    g.add_argument("--density", type=float)
    g.add_argument("--fugacity", type=float)
    p.add_argument("--capacity", type=_capacities, required=True, help="comma list of capacities")
    _add_output(p)

    for name, text in (("measure-cumulants", "Monte Carlo scaled cumulants c_1..c_4 of N_t (balls per step)"),
                       ("measure-histogram", "Monte Carlo histogram of N_t with the exp(-t G(N/t)) curve"),
                       ("measure-correlation", "Monte Carlo generalized correlation sum_x <eta eta>^c under T_n"),
                       ("measure-pseudoenergy", "Monte Carlo L cov(eps_i, eps_j) of pseudoenergies"),
                       ("sum-rule-check", "Monte Carlo check of the density/current sum rule")):
        p = sub.add_parser(name, help=text)
        p.description = text + "."
        _add_state(p, capacity=name != "measure-pseudoenergy")
        _add_mc(p, timed=name != "measure-pseudoenergy")
        if name == "measure-correlation":
            p.add_argument("--dyn-capacity", type=int, required=True, help="capacity n of the dynamics T_n")
            p.add_argument("--indices", required=True, help="comma list m,i,j (eta^(m)_i at t, eta^(l)_j at 0)")
        if name == "measure-pseudoenergy":
            p.add_argument("--truncation", type=int, default=5, help="largest pseudoenergy index i_max")
        if name == "sum-rule-check":
            p.add_argument("--weight", choices=("abs", "square"), default="abs", help="test function |x| or x^2")
        if name == "measure-histogram":
            p.add_argument("--theory", action="store_true",
                           help="add the normalized exp(-t G(N/t)) curve as a third column")
        if name == "measure-cumulants":
            p.add_argument("--bonds", type=int, default=8, help="observation bonds per ring")
        _add_output(p)
    return ap


# ---------------------------------------------------------------- helpers

def _az(args) -> tuple[float, float]:
    """(a, z) from --density / --fugacity / --beta1 --beta-inf."""
    given = [args.density is not None, args.fugacity is not None,
             getattr(args, "beta1", None) is not None or getattr(args, "beta_inf", None) is not None]
    if sum(given) != 1:
        raise ValidationError("give exactly one of --density, --fugacity or --beta1/--beta-inf")
    if args.density is not None:
        z = tba.fugacity(args.density)
        return z, z
    if args.fugacity is not None:
        if not 0 < args.fugacity < 1:
            raise ValidationError("--fugacity must lie in (0, 1)")
        return args.fugacity, args.fugacity
    if args.beta1 is None or args.beta_inf is None:
        raise ValidationError("--beta1 and --beta-inf must be given together")
    return temperatures_to_az(args.beta1, args.beta_inf)


def _state_params(args) -> dict:
    out = {}
    for k in ("density", "fugacity", "beta1", "beta_inf"):
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _ensemble(args):
    if args.length is None or args.length < 1:
        raise ValidationError("--length must be a positive integer")
    if args.density is not None or args.fugacity is not None:
        if args.beta1 is not None or args.beta_inf is not None:
            raise ValidationError("give either a density/fugacity or two temperatures")
        p = args.density if args.density is not None else args.fugacity / (1 + args.fugacity)
        return IidSpec(args.length, p, args.seed)
    a, z = _az(args)
    b1, binf = az_to_temperatures(a, z)
    return Gge2tSpec(args.length, b1, binf, burn_in=args.burn_in, seed=args.seed)


def _random_or_given(args) -> dynamics.Configuration:
    if args.state is not None:
        return dynamics.Configuration(args.state)
    if args.length is None or args.density is None:
        raise ValidationError("give --state, or --length and --density for a random state")
    return sample_iid(IidSpec(args.length, args.density, args.seed))


def _indices(text: str, n: int):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ValidationError(f"--indices needs {n} comma-separated values")
    try:
        return [_capacity(p) for p in parts]
    except argparse.ArgumentTypeError as exc:
        raise ValidationError(str(exc))


# ---------------------------------------------------------------- commands

def _cmd_evolve(args):
    if args.steps < 0:
        raise ValidationError("--steps must be non-negative")
    if args.capacity == tba.INF:
        raise ValidationError("evolve needs a finite capacity")
    cfg = _random_or_given(args)
    rows = []
    for step in range(1, args.steps + 1):
        cfg, trace = dynamics.evolve_periodic(cfg, args.capacity)
        rows.append({"step": step, "state": cfg.to_string(),
                     "loads": " ".join(str(int(v)) for v in trace.loads), "exit_load": trace.exit_load})
    return ["step", "state", "loads", "exit_load"], rows


def _cmd_energies(args):
    cfg = _random_or_given(args)
    K = args.truncation or max(2, cfg.Q + 1)
    spec = dynamics.energies(cfg, K)
    try:
        m = dynamics.soliton_content(spec)
    except NonSaturatedSpectrum:
        m = [None] * spec.K
    rows = []
    E = spec.padded()
    for k in range(1, spec.K + 1):
        num = 2 * E[k] - E[k - 1] - (E[k + 1] if k < spec.K else E[k])
        den = cfg.L - 2 * E[k]
        eps = -math.log(num / den) if (k < spec.K and num > 0 and den > 0) else ""
        rows.append({"k": k, "E": int(E[k]), "m": "" if m[k - 1] is None else int(m[k - 1]), "eps": eps})
    return ["k", "E", "m", "eps"], rows


def _cmd_tba(args):
    a, z = _az(args)
    prof = tba.profile(a, z, args.truncation)
    v = tba.velocities(prof, args.capacity).v
    rows = [{"k": k + 1, "rho": prof.rho[k], "sigma": prof.sigma[k], "y": prof.y[k], "v": v[k]}
            for k in range(prof.K)]
    return ["k", "rho", "sigma", "y", "v"], rows


def _cmd_drude(args):
    a, z = _az(args)
    l = args.capacity
    base = {"a": a, "z": z, "capacity": l}
    cur = tba.mean_currents(a, z, l)
    rows = [dict(quantity="drude", **base, value=tba.drude_analytic(a, z, l)),
            dict(quantity="c2", **base, value=tba.c2_analytic(a, z, l)),
            dict(quantity="ball_current", **base, value=cur.ball),
            dict(quantity="soliton_current", **base, value=cur.soliton)]
    return ["quantity", "a", "z", "capacity", "value"], rows


def _cmd_correlations(args):
    a, z = _az(args)
    i, j, l, m = _indices(args.indices, 4)
    v = tba.four_index_correlation(a, z, i, j, l, m, inf_proxy=args.inf_proxy)
    return ["quantity", "a", "z", "i", "j", "l", "m", "value"], [
        {"quantity": "C", "a": a, "z": z, "i": i, "j": j, "l": l, "m": m, "value": v}]


def _cmd_flux(args):
    a, z = _az(args)
    l = args.capacity
    if l == tba.INF:
        raise ValidationError("flux-jacobian needs a finite capacity")
    K = args.truncation or l + 2
    if K < l:
        raise ValidationError("--truncation must be at least the capacity")
    A = tba.flux_jacobian(tba.profile(a, z, K), l, K).values
    rows = [{"row": r + 1, **{f"col{c + 1}": A[r, c] for c in range(K)}} for r in range(K)]
    return ["row"] + [f"col{c + 1}" for c in range(K)], rows


def _cmd_ldf(args):
    a, z = _az(args)
    if a != z:
        raise ValidationError("ldf is for i.i.d. states; use ldf2t for two temperatures")
    name, pts = args.grid
    l = args.capacity
    rows = []
    if name in ("lambda", "lam"):
        for lam in pts:
            F, dF, d2F = ldf.scgf_derivatives(z, l, lam, 2)
            rows.append({"lambda": lam, "F": F, "dF": dF, "d2F": d2F})
        return ["lambda", "F", "dF", "d2F"], rows
    if name == "j":
        for j in pts:
            r = ldf.rate(z, l, j)
            rows.append({"j": r.j, "G": r.value, "lambda_star": r.lam})
        return ["j", "G", "lambda_star"], rows
    raise ValidationError("grid name must be 'lambda' or 'j'")


def _cmd_ldf2t(args):
    a, z = _az(args)
    name, pts = args.grid
    if name not in ("lambda", "lam"):
        raise ValidationError("ldf2t grid must be over lambda")
    rows = []
    for lam in pts:
        p = ldf.scgf_2t(a, z, args.capacity, lam, args.mu)
        rows.append({"lambda": lam, "mu": args.mu, "F": p.value, "dF_dlambda": p.derivative, "dF_dmu": p.d_mu})
    return ["lambda", "mu", "F", "dF_dlambda", "dF_dmu"], rows


def _cmd_transfer(args):
    if (args.density is None) == (args.fugacity is None):
        raise ValidationError("give exactly one of --density or --fugacity")
    z = tba.fugacity(args.density) if args.density is not None else args.fugacity
    rows = []
    for l in args.capacity:
        if l == tba.INF:
            raise ValidationError("transfer-matrix needs finite capacities")
        rows.append({"l": l, "z": z, "f": transfer.equal_time_variance(l, z),
                     "conjectured_f": transfer.conjectured_f(l, z), "c2_via_tm": transfer.c2_via_tm(l, z)})
    return ["l", "z", "f", "conjectured_f", "c2_via_tm"], rows


def _plan(args, **kw):
    if args.capacity == tba.INF:
        raise ValidationError("Monte Carlo dynamics need a finite capacity")
    return measure.MeasurementPlan(_ensemble(args), l=args.capacity, t=args.time, samples=args.samples,
                                   allow_wrap=args.allow_wrap, **kw)


def _params_text(params: dict) -> str:
    return json.dumps(_jsonable(params), sort_keys=True, separators=(",", ":"))


def _est_rows(ests):
    return [{"name": e.name, "params": _params_text(e.params), "estimate": e.value, "stderr": e.stderr,
             "n_samples": e.n_samples, "n_excluded": e.n_excluded} for e in ests]


EST_COLS = ["name", "params", "estimate", "stderr", "n_samples", "n_excluded"]


def _cmd_cumulants(args):
    res = measure.measure_cumulants(_plan(args, bonds=args.bonds), args.workers)
    return EST_COLS, _est_rows(res.estimates)


def _cmd_histogram(args):
    plan = _plan(args)
    h = measure.measure_histogram(plan, args.workers)
    rows = [{"N": int(v), "count": int(c)} for v, c in zip(h.values, h.counts)]
    if not args.theory:
        return ["N", "count"], rows
    a, z = plan.az
    if a != z or args.time < 1 or z == 0:
        raise ValidationError("--theory needs an i.i.d. state with density > 0 and t >= 1")
    for r, p in zip(rows, measure.histogram_theory(z, args.capacity, args.time, h.values)):
        r["theory"] = float(p)
    return ["N", "count", "theory"], rows


def _cmd_correlation(args):
    m, i, j = _indices(args.indices, 3)
    if tba.INF in (m, i, j):
        raise ValidationError("Monte Carlo indices must be finite (use a large proxy such as 99)")
    e = measure.measure_generalized_correlation(_plan(args, n=args.dyn_capacity, m=m, i=i, j=j), args.workers)
    return EST_COLS, _est_rows([e])


def _cmd_pseudo(args):
    args.capacity, args.time = 1, 0
    plan = _plan(args)
    val, err, acc = measure.measure_pseudoenergy_covariance(plan, args.truncation, args.workers)
    prof = tba.profile(*plan.az, args.truncation)
    params = _params_text({k: v for k, v in plan.params().items() if k not in ("l", "t")})
    rows = []
    for a in range(args.truncation):
        for b in range(a, args.truncation):
            pred = tba.pseudoenergy_cov_prediction(prof, a + 1) if a == b else 0.0
            rows.append({"name": f"Lcov[{a + 1},{b + 1}]", "params": params, "estimate": val[a, b],
                         "stderr": err[a, b], "n_samples": plan.samples, "n_excluded": acc.excluded,
                         "prediction": pred})
    return EST_COLS + ["prediction"], rows


def _cmd_sumrule(args):
    r = measure.sum_rule_check(_plan(args), args.weight, args.workers)
    return ["lhs", "rhs", "discrepancy", "stderr", "z_score", "n_samples"], [
        {"lhs": r.lhs, "rhs": r.rhs, "discrepancy": r.discrepancy, "stderr": r.stderr,
         "z_score": r.z_score, "n_samples": r.n_samples}]


COMMANDS = {
    "evolve": _cmd_evolve, "energies": _cmd_energies, "tba": _cmd_tba, "drude": _cmd_drude,
    "correlations": _cmd_correlations, "flux-jacobian": _cmd_flux, "ldf": _cmd_ldf, "ldf2t": _cmd_ldf2t,
    "transfer-matrix": _cmd_transfer, "measure-cumulants": _cmd_cumulants,
    "measure-histogram": _cmd_histogram, "measure-correlation": _cmd_correlation,
    "measure-pseudoenergy": _cmd_pseudo, "sum-rule-check": _cmd_sumrule,
}


def _with_config(argv: list[str]) -> list[str]:
    """Splice ``key = value`` lines from ``--config FILE`` in as flags; explicit flags win."""
    if "--config" not in argv:
        return argv
    k = argv.index("--config")
    if k + 1 >= len(argv):
        raise ValidationError("--config needs a file name")
    path = argv[k + 1]
    rest = argv[:k] + argv[k + 2:]
    try:
        with open(path, encoding="utf-8") as fh:
            kv = parse_kv(fh.read())
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}")
    extra = []
    for key, value in kv.items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes"):
            extra.append(flag)
        elif value.lower() not in ("false", "no"):
            extra += [flag, value]
    # subcommand first, then file values, then the explicit flags (last one wins)
    return rest[:1] + extra + rest[1:]


def _render(fmt: str, manifest: dict, cols, rows) -> str:
    if fmt == "json":
        return json.dumps({"manifest": _jsonable(manifest), "rows": _jsonable(rows)}, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(_jsonable(manifest), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) if r[c] is not None else "" for c in cols])
    return buf.getvalue()


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _with_config(argv)
    except ValidationError as exc:
        print(f"boxball: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    params = {k: v for k, v in vars(args).items()
              if v is not None and k not in ("command", "out", "format", "workers")}
    manifest = {"command": args.command, "version": __version__, "params": params}
    try:
        cols, rows = COMMANDS[args.command](args)
    except (ValidationError, DomainError, ValueError) as exc:
        print(f"boxball {args.command}: invalid parameters: {exc}", file=sys.stderr)
        return 2
    except (BoxBallError, ArithmeticError, RuntimeError) as exc:
        print(f"boxball {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    text = _render(args.format, manifest, cols, rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
