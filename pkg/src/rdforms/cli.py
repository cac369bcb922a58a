"""Command line front end: ``rdforms check|analyze|simulate MODEL.json``.

Exit codes: 0 pass, 1 verified failure, 2 input error, 3 capacity exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
import jsonschema

from .chain import (
    BirthDeathSpec,
    RateMatrix,
    ReversibleMeasure,
    check_detailed_balance,
    criterion_sequence,
    reversible_measure_from_birth_death,
)
from .configuration import DEFAULT_MAX_STATES, enumerate_configs
from .errors import CapacityError, HypothesisViolation, InvalidSpecError, SymmetryError
from .forms import (
    Model,
    SingleSiteGenerator,
    build_diffusion_generator,
    build_reaction_qpair,
    chain_generator,
    check_flux_symmetry,
    truncate_chain,
)
from .measures import SymmetricFamily, check_H2, check_H3
from .simulate import (
    SimConfig,
    decay_rate_estimate,
    default_burn_in,
    empirical_flux_symmetry,
    gillespie,
    horizon_for_jumps,
    total_variation,
)
from .spectral import (
    PhiProfile,
    lambda_phi,
    log_sobolev_constant,
    spectral_gap,
    verify_gap_sandwich,
    verify_lambda_phi_sandwich,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CAPACITY = 0, 1, 2, 3


class InputError(Exception):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("rdforms").joinpath("model.schema.json").read_text())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def read_model(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise InputError(f"schema violation at {pointer}: {exc.message}") from exc
    return raw


def parse_chain(block: dict, N: int):
    """(Q, rho, birth-death spec or None) from the chain block."""
    if "rates" in block:
        Q = RateMatrix(block["rates"])
        rho = ReversibleMeasure(np.asarray(block["rho"], dtype=float))
        if Q.size != rho.size:
            raise InvalidSpecError(f"rates describe {Q.size} states, rho has {rho.size}")
        if Q.size < N + 1:
            raise InvalidSpecError(f"chain has {Q.size} states, truncation needs {N + 1}")
        bd = None
        if Q.is_birth_death():
            bd = BirthDeathSpec(np.diag(Q.rates, 1), np.diag(Q.rates, -1))
        return Q, rho, bd
    births = np.asarray(block["births"], dtype=float)
    if births.size < N:
        raise InvalidSpecError(f"{births.size} birth rates given, truncation needs {N}")
    if "deaths" in block:
        deaths = np.asarray(block["deaths"], dtype=float)
        if deaths.size != births.size:
            raise InvalidSpecError("births and deaths must have equal length")
        bd = BirthDeathSpec(births, deaths)
        rho = (ReversibleMeasure(np.asarray(block["rho"], dtype=float)) if "rho" in block
               else reversible_measure_from_birth_death(births, deaths))
    else:
        rho = ReversibleMeasure(np.asarray(block["rho"], dtype=float))
        bd = BirthDeathSpec.from_measure(births, rho)
    if rho.size != births.size + 1:
        raise InvalidSpecError(f"rho has {rho.size} entries, chain has {births.size + 1} states")
    return bd.rate_matrix(), rho, bd


def parse_model(raw: dict, max_states: int = DEFAULT_MAX_STATES):
    K, N = raw["sites"], raw["truncation"]
    Q, rho, bd = parse_chain(raw["chain"], N)
    fam = SymmetricFamily.from_json(raw["measures"], K, N)
    site = None
    if "diffusion" in raw:
        if fam.mode != "product":
            raise InvalidSpecError("diffusion needs a product reference family")
        a = np.asarray(raw["diffusion"]["rates"], dtype=float)
        if a.shape != (K, K):
            raise InvalidSpecError(f"diffusion rates must be {K}x{K}")
        site = SingleSiteGenerator(a, fam.mu1)
    space = enumerate_configs(K, N, max_states=max_states)
    return space, fam, Q, rho, bd, site


def run_checks(space, fam, Q, rho) -> tuple[dict, bool]:
    Qn, rhon, _ = truncate_chain(Q, rho, space.N)
    h1 = check_detailed_balance(Qn, rhon)
    h2, h3 = check_H2(fam), check_H3(fam)
    report = {
        "H1": {"passed": h1.passed, "max_residual": h1.max_residual, "pair": list(h1.argmax), "tol": h1.tol},
        "H2": h2.to_json(),
        "H3": h3.to_json(),
        "irreducible": Qn.irreducible,
    }
    ok = h1.passed and h2.passed and h3.passed
    gen = None
    if ok:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            gen = build_reaction_qpair(space, fam, Q, rho, strict=False, check_hypotheses=False)
        sym = check_flux_symmetry(gen)
        report["flux_symmetry"] = sym.to_json()
        report["truncation"] = {"drop_mass": gen.info["drop_mass"], "drop_fraction": gen.info["drop_fraction"],
                                "warnings": [str(w.message) for w in caught]}
        report["states"] = len(space)
        ok = ok and sym.passed
    report["passed"] = ok
    return report, gen


def build_model(space, fam, Q, rho, site) -> Model:
    with warnings.catch_warnings():
        # truncation warnings were already collected by run_checks
        warnings.simplefilter("ignore")
        reaction = build_reaction_qpair(space, fam, Q, rho, check_hypotheses=False)
    Qn, rhon, _ = truncate_chain(Q, rho, space.N)
    diffusion = build_diffusion_generator(space, site, rhon, fam) if site is not None else None
    return Model(space, fam, Qn, rhon, reaction, chain_generator(Qn, rhon), site, diffusion)


def _emit(report, out_dir, name):
    text = dumps(report)
    if out_dir is None:
        print(text)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n")


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def cmd_check(args) -> int:
    raw = read_model(args.model)
    space, fam, Q, rho, _, _ = parse_model(raw, args.max_states)
    report, _ = run_checks(space, fam, Q, rho)
    _emit({"command": "check", "model": raw.get("name", str(args.model)), "checks": report},
          args.out, "check.json")
    if not report["passed"]:
        h1 = report["H1"]
        if not h1["passed"]:
            print(f"(H1) detailed balance residual {h1['max_residual']:.3e} at {h1['pair']}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_analyze(args) -> int:
    raw = read_model(args.model)
    space, fam, Q, rho, bd, site = parse_model(raw, args.max_states)
    checks, _ = run_checks(space, fam, Q, rho)
    report = {"command": "analyze", "model": raw.get("name", str(args.model)), "checks": checks}
    if not checks["passed"]:
        _emit(report, args.out, "report.json")
        return EXIT_FAIL
    model = build_model(space, fam, Q, rho, site)
    combined = model.combined
    lines = []
    failed = False
    profiles = list(args.lambda_phi or [])
    if args.sandwiches and not profiles:
        profiles = raw.get("phi_profiles", [])
    if args.gap or args.sandwiches:
        gq, gr, gc = spectral_gap(model.chain), spectral_gap(model.reaction), spectral_gap(combined)
        report["gap"] = {"chain": gq.to_json(), "reaction": gr.to_json(), "combined": gc.to_json()}
        lines.append(f"gap(E_Q) = {gq.gap:.12g}")
        lines.append(f"gap(E_R) = {gr.gap:.12g}")
    if args.lsc:
        res = {}
        for name, gen in (("chain", model.chain), ("reaction", model.reaction), ("combined", combined)):
            res[name] = log_sobolev_constant(gen, starts=args.starts, seed=args.seed).to_json()
            lines.append(f"L({name}) = {res[name]['L']:.10g}")
        report["log_sobolev"] = res
    if profiles:
        res = {}
        for text in profiles:
            prof = PhiProfile.parse(text)
            r = lambda_phi(combined, prof, starts=args.starts, seed=args.seed)
            res[text] = r.to_json()
            lines.append(f"lambda_phi[{text}] = {r.value:.10g}")
        report["lambda_phi"] = res
    if args.criteria:
        if bd is None:
            raise InvalidSpecError("criteria need a birth-death chain")
        crit = {}
        for kind in ("poincare", "superPoincare", "lambdaPhi", "superLogSobolev"):
            seq = criterion_sequence(bd, rho, kind, alpha=args.alpha if kind == "lambdaPhi" else None)
            entry = {"sup": seq.sup, "argsup": seq.argsup, "tail_trend": seq.tail_trend,
                     "trend_to_zero": seq.trend_to_zero, "edge_dropped": seq.edge_dropped, "alpha": seq.alpha}
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                path = args.out / f"criteria_{kind}.csv"
                _write_csv(path, seq.csv_rows())
                entry["csv"] = path.name
            crit[kind] = entry
            lines.append(f"criterion[{kind}] sup = {seq.sup:.6g} (trend {seq.tail_trend})")
        report["criteria"] = crit
    if args.sandwiches:
        v = verify_gap_sandwich(model.chain, model.reaction, float(model.rho.weights[0]))
        sw = {"gap": v.to_json()}
        lines.append(f"gap sandwich: {v.values['gap_Q']:.6g} >= {v.values['gap_R']:.6g} >= "
                     f"{v.values['rho0_gap_Q']:.6g}  verdict {'PASS' if v.passed else 'FAIL'}")
        for note in v.notes:
            lines.append(f"  note: {note}")
        failed |= not v.passed
        for text in profiles:
            prof = PhiProfile.parse(text)
            lv = verify_lambda_phi_sandwich(model.chain, combined, model.level_generators(), prof,
                                            starts=args.starts, seed=args.seed)
            sw[f"lambda_phi[{text}]"] = lv.to_json()
            lines.append(f"lambda_phi[{text}] sandwich verdict {'PASS' if lv.passed else 'FAIL'}")
            failed |= not lv.passed
        report["sandwiches"] = sw
    report["passed"] = not failed
    _emit(report, args.out, "report.json")
    stream = sys.stdout if args.out is not None else sys.stderr
    for line in lines:
        print(line, file=stream)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_simulate(args) -> int:
    raw = read_model(args.model)
    space, fam, Q, rho, _, site = parse_model(raw, args.max_states)
    checks, _ = run_checks(space, fam, Q, rho)
    if not checks["passed"]:
        _emit({"command": "simulate", "checks": checks}, args.out, "simulate.json")
        return EXIT_FAIL
    model = build_model(space, fam, Q, rho, site)
    gen = model.combined
    sim = raw.get("sim", {})
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    horizon = args.horizon if args.horizon is not None else sim.get("horizon")
    jumps = args.expected_jumps if args.expected_jumps is not None else sim.get("expected_jumps", 1e5)
    if horizon is None:
        if float(gen.pi @ gen.total_rates) == 0:
            _emit({"command": "simulate", "degenerate": True}, args.out, "simulate.json")
            return EXIT_FAIL
        horizon = horizon_for_jumps(gen, jumps)
    g = spectral_gap(gen)
    burn_in = args.burn_in if args.burn_in is not None else sim.get("burn_in")
    if burn_in is None:
        burn_in = default_burn_in(float(horizon), None if g.reducible else g.gap)
    try:
        cfg = SimConfig(int(seed), float(horizon), float(burn_in), int(sim.get("trajectories", 1)))
    except InvalidSpecError as exc:
        raise InputError(str(exc)) from exc
    traj = gillespie(gen, cfg)
    if traj.degenerate:
        _emit({"command": "simulate", "degenerate": True}, args.out, "simulate.json")
        return EXIT_FAIL
    flux = empirical_flux_symmetry(traj, gen)
    summary = {
        "command": "simulate",
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "burn_in": cfg.burn_in,
        "jumps": traj.n_jumps,
        "tv_distance": total_variation(traj, gen.pi),
        "flux_symmetry": flux.to_json(),
        "gap": g.gap,
    }
    if not g.reducible and np.isfinite(g.gap):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = decay_rate_estimate(gen, cfg, g.certificate, gap=g.gap)
        summary["decay"] = fit.to_json()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_csv(args.out / "trajectory.csv", traj.csv_rows(gen.labels))
    _emit(summary, args.out, "simulate.json")
    if args.out is not None:
        print(f"TV distance {summary['tv_distance']:.4g}; flux symmetry {flux.verdict}")
    return EXIT_FAIL if flux.verdict == "fail" else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdforms", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", type=Path)
        sp.add_argument("--out", type=Path, default=None, help="directory for JSON/CSV outputs")
        sp.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)

    c = sub.add_parser("check", help="hypotheses and flux symmetry")
    common(c)
    c.set_defaults(func=cmd_check)

    a = sub.add_parser("analyze", help="spectral quantities, criteria and sandwiches")
    common(a)
    a.add_argument("--gap", action="store_true")
    a.add_argument("--lsc", action="store_true")
    a.add_argument("--lambda-phi", action="append", metavar="PROFILE",
                   help="one, logsob or power:ALPHA (repeatable)")
    a.add_argument("--criteria", action="store_true")
    a.add_argument("--alpha", type=float, default=1.0, help="exponent of the lambdaPhi criterion")
    a.add_argument("--sandwiches", action="store_true")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--starts", type=int, default=32)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="Gillespie simulation summary")
    common(s)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--expected-jumps", type=float, default=None)
    s.add_argument("--burn-in", type=float, default=None)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"capacity exceeded: {exc.count} states (cap {exc.cap}); raise --max-states", file=sys.stderr)
        return EXIT_CAPACITY
    except (InputError, InvalidSpecError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (HypothesisViolation, SymmetryError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
