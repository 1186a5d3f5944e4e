"""Command line: ``harnack-lab verify | solve | harnack``.

Exit status is 0 when every check passes, 1 when any fails and 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from . import harness as HN
from . import solver as S
from .config import ConfigError, load_config, scenario_from_config
from .report import VerificationReport, at_least, dumps, holds
from .suites import SUITES, SuiteConfig, run_suite

OK, FAILED, USAGE = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("scale must be positive")
    return v


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=_u64, default=d(0), help="random seed (u64)")
    p.add_argument("--grid-scale", type=_positive, default=d(1.0), help="multiplier on every mesh spacing")
    p.add_argument("--tol-scale", type=_positive, default=d(1.0), help="multiplier on numerical tolerances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harnack-lab", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)  # flags may also follow the subcommand
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])
    v.add_argument("--kappa", type=float, default=None, help="curvature parameter for suites that take one")
    v.add_argument("--out", type=Path, default=None, help="JSON report path (stdout if omitted)")

    s = sub.add_parser("solve", parents=[common], help="solve one scenario and write grid data")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="CSV path; <out>.json metadata and .dat plot data go alongside")

    h = sub.add_parser("harnack", parents=[common], help="measure Harnack ratios for one scenario")
    h.add_argument("--config", type=Path, required=True)
    h.add_argument("--out", type=Path, required=True)
    return parser


def _emit(rep: VerificationReport, out: Path | None) -> int:
    for line in rep.summary_lines():
        print(line, file=sys.stderr)
    text = dumps(rep.to_dict())
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
    return OK if rep.passed else FAILED


def _verify(args) -> int:
    cfg = SuiteConfig(args.seed, args.grid_scale, args.tol_scale, args.kappa)
    start = time.perf_counter()
    rep = run_suite(args.suite, cfg)
    print(f"{args.suite}: {'PASS' if rep.passed else 'FAIL'} in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return _emit(rep, args.out)


def _solve(args) -> int:
    cfg = load_config(args.config)
    scn = scenario_from_config(cfg, args.grid_scale)
    try:
        u, _, info = HN.scenario_solution(scn, cfg.get("horizon"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    args.out.parent.mkdir(parents=True, exist_ok=True)
    u.write_csv(args.out)
    u.write_plot_data(args.out.with_suffix(".dat"))
    meta = {"schema": 1, "scenario": scn.to_dict(), "grid": u.metadata(), "solver": info, "seed": args.seed, "grid_scale": args.grid_scale}
    Path(str(args.out) + ".json").write_text(dumps(meta), encoding="utf-8")  # supersedes the grid-only metadata
    return OK


def _harnack(args) -> int:
    cfg = load_config(args.config)
    scn = scenario_from_config(cfg, args.grid_scale)
    rep = VerificationReport("harnack-scenario", environment={"seed": args.seed, "grid_scale": args.grid_scale, "tol_scale": args.tol_scale})
    rep.results["scenario"] = scn.to_dict()
    try:
        u, f, info = HN.scenario_solution(scn)
        m = HN.measure_harnack(scn, u, f)
        weak = HN.weak_harnack_measure(scn, cfg.get("harnack.p", HN.DEFAULT_PS), u, f)
    except HN.ScenarioError as exc:
        rep.add(holds("scenario.admissible", "solution is nonnegative on the large cylinder", False, reason=str(exc)))
        return _emit(rep, args.out)
    m.diagnostics.update(info)
    rep.add(holds("scenario.ratio_finite", "measured ratio is finite", math.isfinite(m.ratio), ratio=m.ratio))
    if m.li_yau_bound is not None:
        rep.add(at_least("scenario.li_yau", "ratio below the sharp two-point bound", m.li_yau_bound - m.ratio, 0.0))
    rep.add(holds("scenario.weak_monotone_in_p", "p-mean ratios nondecreasing in p", weak["monotone_in_p"]))
    rep.results["measurement"] = m.to_dict()
    rep.results["weak_harnack"] = weak
    rep.constant("theta", m.theta, "1 + log2 cosh(8 sqrt(kappa) R0)")
    return _emit(rep, args.out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    handlers = {"verify": _verify, "solve": _solve, "harnack": _harnack}
    try:
        return handlers[args.command](args)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except S.SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
