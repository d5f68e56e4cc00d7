"""Command-line front end.

Subcommands: ``test`` (independence test on two CSV files), ``clt`` and
``power`` (simulation reproductions emitting CSV series), ``theory``
(closed-form report for a covariance), ``eigencheck`` (minimax perturbation
identity). Every JSON output embeds the fully resolved configuration; CSV
outputs get a ``<name>.meta.json`` sidecar carrying the same, so any output
can be reproduced byte-identically from its own metadata.

Exit codes: 0 success, 2 malformed input/flags, 3 semantic errors (dimension
mismatch, too-small samples, non-PSD covariance, invalid perturbation scale).
A config file (``--config``, JSON, same keys as the long flags with
underscores) supplies defaults; explicit flags win. ``HSDCOV_SEED`` supplies
the default master seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .dcovstats import (
    BandwidthSpec,
    DegenerateSample,
    PairedSample,
    SampleTooSmall,
    kernel_by_name,
)
from .experiments import CltConfig, PowerConfig, run_clt, run_power
from .matcore import NotPositiveDefinite
from .simgen import NoiseDist, SimScenario
from .testkit import dcor_test
from .theory import CovarianceBlocks, minimax_eigencheck, theory_report

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_SEMANTIC = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _default_seed() -> int:
    raw = os.environ.get("HSDCOV_SEED")
    return int(raw) if raw else 0


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_BAD_INPUT)
    if not isinstance(data, dict):
        raise CliError(f"config {path} must hold a JSON object", EXIT_BAD_INPUT)
    # any command output embeds its resolved flags under "config", so output
    # files can be replayed directly
    if isinstance(data.get("config"), dict):
        return data["config"]
    return data


def _merge(args: argparse.Namespace, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _read_csv_matrix(path: str, skip_header: bool) -> np.ndarray:
    rows: list[list[float]] = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CliError(f"cannot open {path}: {exc}", EXIT_BAD_INPUT)
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if skip_header and lineno == 1:
                continue
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise CliError(
                    f"{path}: row {lineno}: non-numeric value", EXIT_BAD_INPUT
                )
    if not rows:
        raise CliError(f"{path}: no data rows", EXIT_BAD_INPUT)
    width = len(rows[0])
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise CliError(
                f"{path}: row {i}: expected {width} columns, got {len(r)}",
                EXIT_BAD_INPUT,
            )
    return np.asarray(rows, dtype=np.float64)


def _format_float(x: float) -> str:
    return repr(float(x))


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    _format_float(c) if isinstance(c, float) else str(c) for c in row
                )
                + "\n"
            )


def _dump_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_bandwidth(text: str) -> BandwidthSpec:
    try:
        return BandwidthSpec.parse(text)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT)


def _parse_kernel(name: str):
    try:
        return kernel_by_name(name)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT)


def _parse_dist(name: str) -> NoiseDist:
    try:
        return NoiseDist(name)
    except ValueError:
        raise CliError(
            f"unknown noise distribution {name!r}; expected normal|uniform|t4",
            EXIT_BAD_INPUT,
        )


def _cmd_test(args: argparse.Namespace, config: dict) -> int:
    alpha = float(_merge(args, config, "alpha", 0.05))
    kernel_name = _merge(args, config, "kernel", "identity")
    bandwidth_text = _merge(args, config, "bandwidth", "fixed:1.0")
    header = bool(_merge(args, config, "header", False))
    x_path = _merge(args, config, "x", None)
    y_path = _merge(args, config, "y", None)
    if not x_path or not y_path:
        raise CliError("test requires --x and --y CSV paths", EXIT_BAD_INPUT)

    x = _read_csv_matrix(x_path, header)
    y = _read_csv_matrix(y_path, header)
    if x.shape[0] != y.shape[0]:
        raise CliError(
            f"row count mismatch: {x_path} has {x.shape[0]} rows, "
            f"{y_path} has {y.shape[0]}",
            EXIT_SEMANTIC,
        )
    if x.shape[0] < 4:
        raise CliError(
            f"{x_path}: need at least 4 rows, got {x.shape[0]}", EXIT_SEMANTIC
        )
    kernel = _parse_kernel(kernel_name)
    bandwidth = _parse_bandwidth(bandwidth_text)
    try:
        result = dcor_test(
            PairedSample(x, y),
            alpha,
            kernels=(kernel, kernel),
            bandwidths=(bandwidth, bandwidth),
        )
    except (SampleTooSmall, DegenerateSample, ValueError) as exc:
        raise CliError(str(exc), EXIT_SEMANTIC)
    payload = {
        "statistic": result.statistic,
        "threshold": result.threshold,
        "p_value": result.p_value,
        "reject": result.reject,
        "degenerate": result.degenerate,
        "kernel": result.kernel_label,
        "bandwidth": list(result.bandwidth_used),
        "config": {
            "command": "test",
            "x": x_path,
            "y": y_path,
            "alpha": alpha,
            "kernel": kernel_name,
            "bandwidth": bandwidth_text,
            "header": header,
        },
    }
    _dump_json(payload, getattr(args, "output", None))
    return EXIT_OK


def _cmd_clt(args: argparse.Namespace, config: dict) -> int:
    n = int(_merge(args, config, "n", 200))
    p = int(_merge(args, config, "p", 50))
    rho = float(_merge(args, config, "rho", 0.0))
    dist = _parse_dist(_merge(args, config, "dist", "normal"))
    kernel_name = _merge(args, config, "kernel", "identity")
    bandwidth_text = _merge(args, config, "bandwidth", "fixed:1.0")
    reps = int(_merge(args, config, "reps", 200))
    seed = int(_merge(args, config, "seed", _default_seed()))
    standardize = _merge(args, config, "standardize", "empirical")
    center = _merge(args, config, "center", "theory")
    threads = int(_merge(args, config, "threads", 1))
    csv_out = _merge(args, config, "csv_out", None)
    json_out = _merge(args, config, "json_out", None)

    kernel = _parse_kernel(kernel_name)
    bandwidth = _parse_bandwidth(bandwidth_text)
    try:
        cfg = CltConfig(
            reps=reps,
            seed=seed,
            scenario=SimScenario(n=n, p=p, rho=rho, dist=dist),
            kernels=(kernel, kernel),
            bandwidths=(bandwidth, bandwidth),
            standardize=standardize,
            center=center,
            threads=threads,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT)
    result = run_clt(cfg)

    resolved = {
        "command": "clt",
        "n": n,
        "p": p,
        "rho": rho,
        "dist": dist.value,
        "kernel": kernel_name,
        "bandwidth": bandwidth_text,
        "reps": reps,
        "seed": seed,
        "standardize": standardize,
        "center": center,
    }
    if csv_out:
        _write_csv(
            csv_out,
            ["prob", "normal_quantile", "sample_quantile"],
            [
                [float(pr), float(nq), float(sq)]
                for pr, nq, sq in zip(
                    result.probs, result.normal_quantiles, result.sample_quantiles
                )
            ],
        )
    _dump_json({"ks_distance": result.ks_distance, "config": resolved}, json_out)
    return EXIT_OK


def _cmd_power(args: argparse.Namespace, config: dict) -> int:
    n = int(_merge(args, config, "n", 200))
    p = int(_merge(args, config, "p", 50))
    rho_grid_text = _merge(args, config, "rho_grid", "0.0")
    kernels_text = _merge(args, config, "kernels", "identity")
    bandwidths_text = _merge(args, config, "bandwidths", "fixed:1.0")
    alpha = float(_merge(args, config, "alpha", 0.05))
    reps = int(_merge(args, config, "reps", 500))
    seed = int(_merge(args, config, "seed", _default_seed()))
    dist = _parse_dist(_merge(args, config, "dist", "normal"))
    threads = int(_merge(args, config, "threads", 1))
    out = _merge(args, config, "out", None)
    if not out:
        raise CliError("power requires --out CSV path", EXIT_BAD_INPUT)

    try:
        if isinstance(rho_grid_text, (list, tuple)):
            rho_grid = tuple(float(v) for v in rho_grid_text)
        else:
            rho_grid = tuple(float(tok) for tok in str(rho_grid_text).split(",") if tok)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad rho grid: {exc}", EXIT_BAD_INPUT)
    kernels = tuple(_parse_kernel(tok) for tok in str(kernels_text).split(",") if tok)
    bandwidths = tuple(
        _parse_bandwidth(tok) for tok in str(bandwidths_text).split(",") if tok
    )
    try:
        cfg = PowerConfig(
            n=n,
            p=p,
            rho_grid=rho_grid,
            kernels=kernels,
            bandwidths=bandwidths,
            alpha=alpha,
            reps=reps,
            seed=seed,
            dist=dist,
            threads=threads,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT)
    result = run_power(cfg)

    _write_csv(
        out,
        ["kernel", "bandwidth", "rho", "empirical_power", "theoretical_power", "std_err"],
        [
            [
                c.kernel,
                c.bandwidth,
                float(c.rho),
                float(c.empirical_power),
                float(c.theoretical_power),
                float(c.std_err),
            ]
            for c in result.cells
        ],
    )
    resolved = {
        "command": "power",
        "n": n,
        "p": p,
        "rho_grid": list(rho_grid),
        "kernels": kernels_text,
        "bandwidths": bandwidths_text,
        "alpha": alpha,
        "reps": reps,
        "seed": seed,
        "dist": dist.value,
        "out": out,
    }
    _dump_json({"config": resolved}, out + ".meta.json")
    return EXIT_OK


def _blocks_from_args(args: argparse.Namespace, config: dict) -> CovarianceBlocks:
    sx_path = _merge(args, config, "sigma_x", None)
    sy_path = _merge(args, config, "sigma_y", None)
    sxy_path = _merge(args, config, "sigma_xy", None)
    if sx_path or sy_path or sxy_path:
        if not (sx_path and sy_path and sxy_path):
            raise CliError(
                "CSV covariance input needs all of --sigma-x, --sigma-y, --sigma-xy",
                EXIT_BAD_INPUT,
            )
        try:
            return CovarianceBlocks(
                _read_csv_matrix(sx_path, False),
                _read_csv_matrix(sxy_path, False),
                _read_csv_matrix(sy_path, False),
            )
        except NotPositiveDefinite as exc:
            raise CliError(str(exc), EXIT_SEMANTIC)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_SEMANTIC)
    p = _merge(args, config, "p", None)
    q = _merge(args, config, "q", None)
    rho_xy = _merge(args, config, "rho_xy", None)
    if p is None or rho_xy is None:
        raise CliError(
            "theory requires --p/--q/--rho-xy or explicit CSV blocks",
            EXIT_BAD_INPUT,
        )
    q = q if q is not None else p
    try:
        return CovarianceBlocks.identity_blocks(int(p), int(q), float(rho_xy))
    except NotPositiveDefinite as exc:
        raise CliError(str(exc), EXIT_SEMANTIC)


def _cmd_theory(args: argparse.Namespace, config: dict) -> int:
    n = int(_merge(args, config, "n", 200))
    alpha = float(_merge(args, config, "alpha", 0.05))
    blocks = _blocks_from_args(args, config)
    report = theory_report(blocks, n, alpha)
    payload = {
        "tau_x_sq": report.tau_x_sq,
        "tau_y_sq": report.tau_y_sq,
        "mean": report.mean,
        "sigma1_sq": report.sigma1_sq,
        "sigma2_sq": report.sigma2_sq,
        "sigma_sq": report.sigma_sq,
        "A": report.local_a,
        "power": report.power,
        "warnings": report.warnings,
        "config": {
            "command": "theory",
            "n": n,
            "alpha": alpha,
            "p": blocks.p,
            "q": blocks.q,
        },
    }
    _dump_json(payload, getattr(args, "output", None))
    return EXIT_OK


def _read_sign_file(path: str, expected: int) -> tuple[np.ndarray, np.ndarray]:
    m = _read_csv_matrix(path, False)
    if m.shape != (2, expected):
        raise CliError(
            f"{path}: expected 2 rows of {expected} signs, got {m.shape}",
            EXIT_BAD_INPUT,
        )
    return m[0], m[1]


def _cmd_eigencheck(args: argparse.Namespace, config: dict) -> int:
    p = int(_merge(args, config, "p", 6))
    q = int(_merge(args, config, "q", 6))
    a = float(_merge(args, config, "a", 1.0 / (4 * 6 * 6)))
    seed = int(_merge(args, config, "seed", _default_seed()))
    u_path = _merge(args, config, "u_signs", None)
    v_path = _merge(args, config, "v_signs", None)

    if abs(a) * p * q >= 1.0:
        raise CliError(
            f"|a| p q = {abs(a) * p * q} must be < 1 for a valid construction",
            EXIT_SEMANTIC,
        )
    if u_path or v_path:
        if not (u_path and v_path):
            raise CliError(
                "explicit signs need both --u-signs and --v-signs", EXIT_BAD_INPUT
            )
        u_pair = _read_sign_file(u_path, p)
        v_pair = _read_sign_file(v_path, q)
    else:
        gen = np.random.Generator(np.random.Philox(key=seed))
        u_pair = (
            gen.choice([-1.0, 1.0], size=p),
            gen.choice([-1.0, 1.0], size=p),
        )
        v_pair = (
            gen.choice([-1.0, 1.0], size=q),
            gen.choice([-1.0, 1.0], size=q),
        )
    try:
        report = minimax_eigencheck(u_pair, v_pair, a)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SEMANTIC)
    payload = {
        "max_identity_error": report.max_identity_error,
        "nontrivial_eigencount": report.nontrivial_eigencount,
        "lambda_values": report.lambda_values,
        "config": {
            "command": "eigencheck",
            "p": p,
            "q": q,
            "a": a,
            "seed": seed,
            "u_signs": u_path,
            "v_signs": v_path,
        },
    }
    _dump_json(payload, getattr(args, "output", None))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsdcov",
        description="Kernel distance covariance tests, theory reports, and "
        "simulation reproductions.",
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="independence test on two CSV files")
    t.add_argument("--x", help="CSV of X observations (rows) x coordinates")
    t.add_argument("--y", help="CSV of Y observations")
    t.add_argument("--alpha", type=float)
    t.add_argument("--kernel", choices=["identity", "gaussian", "laplace"])
    t.add_argument("--bandwidth", help="fixed:<g> | median | rho:<target>")
    t.add_argument("--header", action="store_const", const=True)
    t.add_argument("--output", help="write the JSON report here instead of stdout")

    c = sub.add_parser("clt", help="standardized-statistic QQ data and KS distance")
    c.add_argument("--n", type=int)
    c.add_argument("--p", type=int)
    c.add_argument("--rho", type=float)
    c.add_argument("--dist", choices=[d.value for d in NoiseDist])
    c.add_argument("--kernel", choices=["identity", "gaussian", "laplace"])
    c.add_argument("--bandwidth")
    c.add_argument("--reps", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--standardize", choices=["theory", "null", "empirical"])
    c.add_argument("--center", choices=["theory", "empirical"])
    c.add_argument("--threads", type=int)
    c.add_argument("--csv-out", dest="csv_out")
    c.add_argument("--json-out", dest="json_out")

    w = sub.add_parser("power", help="empirical vs theoretical power table")
    w.add_argument("--n", type=int)
    w.add_argument("--p", type=int)
    w.add_argument("--rho-grid", dest="rho_grid", help="comma-separated rho values")
    w.add_argument("--kernels", help="comma-separated kernel names")
    w.add_argument("--bandwidths", help="comma-separated bandwidth specs")
    w.add_argument("--alpha", type=float)
    w.add_argument("--reps", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--dist", choices=[d.value for d in NoiseDist])
    w.add_argument("--threads", type=int)
    w.add_argument("--out", help="output CSV path")

    th = sub.add_parser("theory", help="closed-form report for a covariance")
    th.add_argument("--p", type=int)
    th.add_argument("--q", type=int)
    th.add_argument("--rho-xy", dest="rho_xy", type=float)
    th.add_argument("--sigma-x", dest="sigma_x")
    th.add_argument("--sigma-y", dest="sigma_y")
    th.add_argument("--sigma-xy", dest="sigma_xy")
    th.add_argument("--n", type=int)
    th.add_argument("--alpha", type=float)
    th.add_argument("--output")

    e = sub.add_parser("eigencheck", help="minimax perturbation identity check")
    e.add_argument("--p", type=int)
    e.add_argument("--q", type=int)
    e.add_argument("--a", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--u-signs", dest="u_signs")
    e.add_argument("--v-signs", dest="v_signs")
    e.add_argument("--output")

    return parser


_DISPATCH = {
    "test": _cmd_test,
    "clt": _cmd_clt,
    "power": _cmd_power,
    "theory": _cmd_theory,
    "eigencheck": _cmd_eigencheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return _DISPATCH[args.command](args, config)
    except CliError as exc:
        print(f"hsdcov: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
