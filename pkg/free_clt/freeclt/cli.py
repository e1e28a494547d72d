from __future__ import annotations

import argparse
import concurrent.futures
import logging
import math
import sys
import uuid
from pathlib import Path
from typing import Any, Callable, Sequence, TypeVar

from pydantic import ValidationError

from freeclt.config import Settings, get_log_dir, get_log_level, load_settings, settings_summary
from freeclt.errors import FreeCLTError, NoConvergence, ParseError, PrecisionLoss
from freeclt.logging_setup import get_logger, set_run_id, setup_logging
from freeclt.models.schemas import (
    AtomicMeasure,
    EntropyReport,
    EpsPolicy,
    GridSpec,
    Measure,
    RunConfig,
    SemicircleMeasure,
)
from freeclt.services.density import invert_density, l1_distance, support_window
from freeclt.services.entropy import deficit_fits, entropy_report
from freeclt.services.expansion import (
    RateFit,
    coefficients,
    expansion_residual,
    expected_chi_deficit,
    expected_fisher_excess,
    fit_rate,
    l1_leading_term,
    meixner_density_n,
    semicircle_density,
    th7_density,
    v_n_density,
)
from freeclt.services.measure_spec import parse_measure
from freeclt.services.measures import mean_and_variance, moment, tabulate
from freeclt.services.reports import ReportTable, emit, render
from freeclt.services.subordination import solve_Z
from freeclt.services.transforms import moments_from_cauchy, moments_from_tau, tau_from_atomic

COMMANDS = ("density", "expansion", "l1", "entropy", "fisher", "subordination", "sweep", "moments")
ENTROPY_COLUMNS = ("n", "chi", "fisher", "logEnergy", "chiDeficit", "fisherExcess")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3

T = TypeVar("T")


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _split_numbers(text: str, sep: str, count: int | None, what: str) -> list[str]:
    parts = text.split(sep)
    if count is not None and len(parts) != count:
        raise ParseError(f"Malformed {what} {text!r}", offset=_byte_offset(text, len(text)), expected=f"{count} fields")
    return parts


def _to_float(text: str, part: str, start: int, what: str) -> float:
    try:
        return float(part)
    except ValueError:
        raise ParseError(f"Malformed {what} {text!r}", offset=_byte_offset(text, start), expected="a number") from None


def _parse_numbers(text: str, sep: str, count: int | None, what: str) -> list[float]:
    parts = _split_numbers(text, sep, count, what)
    values: list[float] = []
    start = 0
    for part in parts:
        values.append(_to_float(text, part, start, what))
        start += len(part) + 1
    return values


def parse_grid(text: str) -> GridSpec:
    """``lo:hi:points`` (e.g. ``-4:4:2001``)."""
    lo, hi, points = _parse_numbers(text, ":", 3, "grid")
    if points != int(points):
        offset = _byte_offset(text, text.rfind(":") + 1)
        raise ParseError(f"Malformed grid {text!r}", offset=offset, expected="an integer point count")
    return GridSpec(lo=lo, hi=hi, points=int(points))


def parse_n_list(text: str) -> tuple[int, ...]:
    values = _parse_numbers(text, ",", None, "n-list")
    if any(v != int(v) for v in values):
        raise ParseError(f"Malformed n-list {text!r}", offset=0, expected="integers")
    return tuple(int(v) for v in values)


def parse_eps(text: str) -> EpsPolicy:
    """``richardson``, ``richardson:EPS``, ``fixed:EPS`` or a bare ``EPS`` meaning fixed."""
    name, _, value = text.partition(":")
    if name in ("richardson", "fixed"):
        if not value:
            return EpsPolicy(kind=name)
        return EpsPolicy(kind=name, eps=_to_float(text, value, len(name) + 1, "eps policy"))
    return EpsPolicy(kind="fixed", eps=_to_float(text, text, 0, "eps policy"))


def parse_point(text: str) -> tuple[float, float]:
    re_part, im_part = _parse_numbers(text, ",", 2, "point")
    return re_part, im_part


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--measure", required=True, help='Measure spec, e.g. "atoms((-1,0.5),(1,0.5))"')
    common.add_argument("--n", type=int, default=None, help="Single number of convolution factors")
    common.add_argument("--n-list", default=None, help="Comma-separated n values (default from settings)")
    common.add_argument("--grid", default=None, help="lo:hi:points (default -4:4:2001)")
    common.add_argument("--eps", default=None, help="richardson[:EPS] | fixed:EPS | EPS")
    common.add_argument("--tol", type=float, default=None, help="Relative subordination tolerance")
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--format", dest="output_format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", type=Path, default=None, help="Output file (stdout when omitted)")
    common.add_argument("--z", default=None, help='Point "re,im" for the subordination command')
    common.add_argument("--k-max", type=int, default=8, help="Highest moment for the moments command")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default WARNING)")

    parser = argparse.ArgumentParser(prog="freeclt", description="Free central limit theorem computations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def build_config(args: argparse.Namespace, settings: Settings) -> RunConfig:
    grid = (
        parse_grid(args.grid)
        if args.grid
        else GridSpec(lo=settings.grid_lo, hi=settings.grid_hi, points=settings.grid_points)
    )
    eps = parse_eps(args.eps) if args.eps else EpsPolicy(kind=settings.eps_policy, eps=settings.eps)
    return RunConfig(
        measure=args.measure,
        n=args.n,
        n_list=parse_n_list(args.n_list) if args.n_list else settings.n_list,
        grid=grid,
        eps=eps,
        tol=args.tol if args.tol is not None else settings.tol,
        max_iter=args.max_iter if args.max_iter is not None else settings.max_iter,
        output_format=args.output_format,
        out=args.out,
        z=parse_point(args.z) if args.z else None,
        k_max=args.k_max,
        threads=settings.threads,
        window_constant=settings.window_constant,
        cauchy_height=settings.cauchy_height,
    )


def _map_n(func: Callable[[int], T], cfg: RunConfig) -> list[tuple[int, T]]:
    """Run ``func`` for every n; results come back in ascending n whatever the completion order."""
    ns = list(cfg.ns)
    if cfg.threads > 1 and len(ns) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(cfg.threads, len(ns))) as executor:
            results = list(executor.map(func, ns))
    else:
        results = [func(n) for n in ns]
    return sorted(zip(ns, results), key=lambda item: item[0])


def _profile(measure: Measure, n: int, cfg: RunConfig):
    return invert_density(measure, n, cfg.grid, cfg.eps, tol=cfg.tol, max_iter=cfg.max_iter)


def _third_fourth(measure: Measure) -> tuple[float, float]:
    return moment(measure, 3), moment(measure, 4)


def _semicircle_reference(cfg: RunConfig):
    return tabulate(SemicircleMeasure(), cfg.grid.lo, cfg.grid.hi, cfg.grid.points)


def cmd_density(measure: Measure, cfg: RunConfig) -> ReportTable:
    results = _map_n(lambda n: _profile(measure, n, cfg), cfg)
    if cfg.output_format == "json":
        rows = [{"n": n, "x": p.grid.tolist(), "p": list(p.values)} for n, p in results]
        return ReportTable("density", ("n", "x", "p"), rows)
    if len(results) == 1:
        profile = results[0][1]
        rows = [{"x": x, "p": p} for x, p in zip(profile.grid.tolist(), profile.values)]
        return ReportTable("density", ("x", "p"), rows)
    rows = [{"n": n, "x": x, "p": p} for n, profile in results for x, p in zip(profile.grid.tolist(), profile.values)]
    return ReportTable("density", ("n", "x", "p"), rows)


def cmd_expansion(measure: Measure, cfg: RunConfig) -> ReportTable:
    m3, m4 = _third_fourth(measure)
    x = cfg.grid.nodes()

    def run(n: int) -> list[dict[str, Any]]:
        c = coefficients(m3, m4, n)
        profile = _profile(measure, n, cfg)
        p_n = profile.density
        lo, hi = support_window(c, window_constant=cfg.window_constant)
        inside = [lo <= value <= hi for value in x.tolist()]
        if any(inside):
            residual = expansion_residual(profile, c, window_constant=cfg.window_constant)
            get_logger().info(
                "expansion_residual",
                extra={"event_name": "expansion_residual", "n": n, "residual": residual},
            )
        shifted = x - c.a_n
        v_n = v_n_density(c, shifted)
        th7 = th7_density(c, shifted)
        meixner = meixner_density_n(c, x)
        p_w = semicircle_density(x)
        return [
            {
                "n": n,
                "x": float(x[i]),
                "p_n": float(p_n[i]),
                "v_n": float(v_n[i]),
                "th7": float(th7[i]),
                "meixner": float(meixner[i]),
                "semicircle": float(p_w[i]),
                "in_window": inside[i],
            }
            for i in range(x.size)
        ]

    rows = [row for _, block in _map_n(run, cfg) for row in block]
    return ReportTable("expansion", ("n", "x", "p_n", "v_n", "th7", "meixner", "semicircle", "in_window"), rows)


def _l1_row(measure: Measure, n: int, cfg: RunConfig, reference) -> dict[str, Any]:
    m3, m4 = _third_fourth(measure)
    distance = l1_distance(_profile(measure, n, cfg), reference)
    leading = l1_leading_term(m3, m4, n)
    symmetric = abs(m3) <= 1e-12
    return {
        "n": n,
        "l1": distance,
        "l1_leading": leading,
        "scaled_l1": distance * (n if symmetric else math.sqrt(n)),
        "ratio": distance / leading if leading > 0 else None,
    }


def cmd_l1(measure: Measure, cfg: RunConfig) -> ReportTable:
    reference = _semicircle_reference(cfg)
    rows = [row for _, row in _map_n(lambda n: _l1_row(measure, n, cfg, reference), cfg)]
    return ReportTable("l1", ("n", "l1", "l1_leading", "scaled_l1", "ratio"), rows)


def cmd_entropy(measure: Measure, cfg: RunConfig) -> ReportTable:
    m3 = moment(measure, 3)
    rows = []
    for n, report in _map_n(lambda n: entropy_report(_profile(measure, n, cfg), n), cfg):
        row = report.model_dump(by_alias=True)
        row["scaledChiDeficit"] = n * report.chi_deficit
        row["expectedChiDeficit"] = expected_chi_deficit(m3, n)
        rows.append(row)
    return ReportTable("entropy", ENTROPY_COLUMNS + ("scaledChiDeficit", "expectedChiDeficit"), rows)


def cmd_fisher(measure: Measure, cfg: RunConfig) -> ReportTable:
    m3 = moment(measure, 3)
    rows = []
    for n, report in _map_n(lambda n: entropy_report(_profile(measure, n, cfg), n), cfg):
        rows.append(
            {
                "n": n,
                "fisher": report.fisher,
                "fisherExcess": report.fisher_excess,
                "scaledFisherExcess": n * report.fisher_excess,
                "expectedFisherExcess": expected_fisher_excess(m3, n),
            }
        )
    return ReportTable(
        "fisher",
        ("n", "fisher", "fisherExcess", "scaledFisherExcess", "expectedFisherExcess"),
        rows,
    )


def cmd_subordination(measure: Measure, cfg: RunConfig) -> ReportTable:
    re_part, im_part = cfg.z if cfg.z is not None else (0.0, 1.0)
    z = complex(re_part, im_part)
    rows = []
    for n, sol in _map_n(lambda n: solve_Z(measure, n, z, cfg.tol, max_iter=cfg.max_iter), cfg):
        rows.append(
            {
                "n": n,
                "z_re": z.real,
                "z_im": z.imag,
                "Z_re": sol.Z.real,
                "Z_im": sol.Z.imag,
                "iterations": sol.iterations,
                "residual": sol.residual,
            }
        )
    return ReportTable("subordination", ("n", "z_re", "z_im", "Z_re", "Z_im", "iterations", "residual"), rows)


def cmd_sweep(measure: Measure, cfg: RunConfig) -> ReportTable:
    reference = _semicircle_reference(cfg)
    m3, m4 = _third_fourth(measure)

    def run(n: int) -> tuple[dict[str, Any], EntropyReport]:
        profile = _profile(measure, n, cfg)
        report = entropy_report(profile, n)
        row = {
            "n": n,
            "l1": l1_distance(profile, reference),
            "l1_leading": l1_leading_term(m3, m4, n),
            "chi": report.chi,
            "chiDeficit": report.chi_deficit,
            "fisher": report.fisher,
            "fisherExcess": report.fisher_excess,
        }
        return row, report

    results = [result for _, result in _map_n(run, cfg)]
    rows = [row for row, _ in results]
    fits: dict[str, RateFit | None] = {"fitted": None}
    if len(rows) >= 2 and all(row["l1"] > 0 for row in rows):
        fits["fitted"] = fit_rate([row["n"] for row in rows], [row["l1"] for row in rows])
    fits["chi"], fits["fisher"] = deficit_fits([report for _, report in results])
    get_logger().info(
        "sweep_rate_fit",
        extra={
            "event_name": "sweep_rate_fit",
            **{f"{name}_exponent": None if fit is None else fit.exponent for name, fit in fits.items()},
        },
    )
    for row in rows:
        for name, fit in fits.items():
            row[f"{name}_exponent"] = None if fit is None else fit.exponent
            row[f"{name}_constant"] = None if fit is None else fit.constant
    columns = (
        "n",
        "l1",
        "l1_leading",
        "chi",
        "chiDeficit",
        "fisher",
        "fisherExcess",
        "fitted_exponent",
        "fitted_constant",
        "chi_exponent",
        "chi_constant",
        "fisher_exponent",
        "fisher_constant",
    )
    return ReportTable("sweep", columns, rows)


def cmd_moments(measure: Measure, cfg: RunConfig) -> ReportTable:
    tau = None
    if isinstance(measure, AtomicMeasure) and len(measure.atoms) >= 2:
        mean, _ = mean_and_variance(measure)
        if abs(mean) <= 1e-10:
            tau = tau_from_atomic(measure)
    direct = [moment(measure, k) for k in range(cfg.k_max + 1)]
    rows = []
    for k, value in enumerate(direct):
        try:
            recovered: float | None = moments_from_cauchy(measure, k, cfg.cauchy_height, known=direct[:k])
        except PrecisionLoss:
            recovered = None
        rows.append(
            {
                "k": k,
                "moment": value,
                "from_cauchy": recovered,
                "from_tau": moments_from_tau(tau, k) if tau is not None and k >= 2 else None,
            }
        )
    return ReportTable("moments", ("k", "moment", "from_cauchy", "from_tau"), rows)


_HANDLERS: dict[str, Callable[[Measure, RunConfig], ReportTable]] = {
    "density": cmd_density,
    "expansion": cmd_expansion,
    "l1": cmd_l1,
    "entropy": cmd_entropy,
    "fisher": cmd_fisher,
    "subordination": cmd_subordination,
    "sweep": cmd_sweep,
    "moments": cmd_moments,
}


def _report_error(name: str, message: str) -> None:
    sys.stderr.write(f"{name}: {message}\n")


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``freeclt`` console script.

    Exit codes: 0 on success, 2 for malformed input, 3 when the subordination solver does
    not converge, 1 for any other library error.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    level_name = (args.log_level or get_log_level() or "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        parser.error(f"unknown log level {args.log_level!r}")
    log_dir = get_log_dir()
    setup_logging(Path(log_dir) if log_dir else None, level=level)
    logging.getLogger("freeclt").setLevel(level)
    run_id = uuid.uuid4().hex[:12]
    set_run_id(run_id)
    log = get_logger(run_id=run_id)

    try:
        settings = load_settings()
        cfg = build_config(args, settings)
        measure = parse_measure(cfg.measure)
    except ParseError as e:
        _report_error(e.qualified_name, str(e))
        return EXIT_USAGE
    except ValidationError as e:
        _report_error("cli.ValidationError", str(e).replace("\n", " "))
        return EXIT_USAGE
    except RuntimeError as e:
        _report_error("config.RuntimeError", str(e))
        return EXIT_USAGE

    log.info(
        "command_started",
        extra={"event_name": "command_started", "command": args.command, "settings": settings_summary(settings)},
    )
    try:
        table = _HANDLERS[args.command](measure, cfg)
    except NoConvergence as e:
        _report_error(e.qualified_name, str(e))
        return EXIT_NO_CONVERGENCE
    except ValidationError as e:
        _report_error("cli.ValidationError", str(e).replace("\n", " "))
        return EXIT_USAGE
    except FreeCLTError as e:
        _report_error(e.qualified_name, str(e))
        return EXIT_FAILURE

    emit(render(table, cfg.output_format), cfg.out)
    log.info("command_finished", extra={"event_name": "command_finished", "command": args.command, "rows": len(table.rows)})
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
