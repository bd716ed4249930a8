"""Command-line front end: ``dslt <subcommand> [options]``.

Settings resolve as command-line flags > ``--config`` file > built-in
defaults. The config file is flat ``key = value`` text; keys are the long
option names with dashes or underscores, ``#`` starts a comment. The
``DSLT_NUM_THREADS`` environment variable sets the default thread count
for the compiled Monte Carlo kernels.

Every output embeds the package version, the fully resolved settings and the
seed. Files are written to a temporary sibling and renamed into place. Invalid
input exits with status 2 and a JSON error object on stderr naming the field.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import DomainError, ModelConfig

__all__ = ["main", "build_parser", "load_config_file", "atomic_write"]

THREADS_ENV = "DSLT_NUM_THREADS"
EXIT_USAGE = 2
# space lags stay below the mollifier scale sqrt(eps) ~ 0.03 at the default eps
DEFAULT_LAGS = {"time": (1 / 64, 1 / 32, 1 / 16, 1 / 8), "space": (0.0025, 0.005, 0.01, 0.02)}


class SpecError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse flat ``key = value`` lines into a dict with underscore keys."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{path}:{lineno}: expected 'key = value'", "config")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _add_model(p: argparse.ArgumentParser, H: float = 0.5, eps: float = 0.01) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--H", type=float, default=H, help="Hurst index in (0, 1)")
    g.add_argument("--d", type=int, default=1, help="spatial dimension")
    g.add_argument("--k", type=_int_list, default=None, help="multi-index, comma list (default: 1,0,...,0)")
    g.add_argument("--t", type=float, default=1.0, help="time horizon")
    g.add_argument("--eps", type=float, default=eps, help="mollification parameter epsilon")


def _add_common(p: argparse.ArgumentParser, formats=("json", "csv")) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help=f"compiled-kernel threads (env {THREADS_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dslt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="sample fBm paths")
    _add_model(p)
    _add_common(p, ("csv", "json", "binary"))
    p.add_argument("--n-paths", type=int, default=10)
    p.add_argument("--n-steps", type=int, default=1024)
    p.add_argument("--method", choices=("auto", "circulant", "cholesky"), default="auto")

    p = sub.add_parser("estimate", help="Monte Carlo moment of the mollified DSLT")
    _add_model(p)
    _add_common(p)
    p.add_argument("--y", type=_float_list, default=None, help="spatial point, comma list (default 0)")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--n-steps", type=int, default=512)
    p.add_argument("--no-antithetic", action="store_true")

    p = sub.add_parser("second-moment", help="E[a_eps a_eta] by quadrature")
    _add_model(p, eps=0.1)
    _add_common(p, ("json",))
    p.add_argument("--eta", type=float, default=None, help="second mollification (default: eps)")
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--budget", type=int, default=10_000_000)

    p = sub.add_parser("clt", help="critical-case CLT ladder and sampling check (H = 2/3, d = 1, k = 1)")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--eps-ladder", type=_float_list, default=[1e-2, 1e-3])
    p.add_argument("--n-paths", type=int, default=200)
    p.add_argument("--n-steps", type=int, default=512)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--csv-out", help="per-path normalized statistics (default: next to --out)")
    _add_common(p, ("json",))

    p = sub.add_parser("holder", help="log-log Hölder exponent fit")
    _add_model(p, H=0.3, eps=1e-3)
    _add_common(p)
    p.add_argument("--variable", choices=("time", "space"), default="time")
    p.add_argument("--lags", type=_float_list, default=None, help="comma list (default depends on --variable)")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--n-paths", type=int, default=400)
    p.add_argument("--n-steps", type=int, default=512)

    p = sub.add_parser("bounds-check", help="sampled ratios against the Gaussian-integral and region bounds")
    _add_common(p, ("csv", "json"))
    p.add_argument("--n-draws", type=int, default=1000)
    p.add_argument("--hurst", type=_float_list, default=[0.25, 0.5, 2 / 3, 0.75])
    p.add_argument("--max-order", type=int, default=5)
    return parser


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = load_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.subcommand]  # noqa: SLF001
        actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
        for key, value in values.items():
            if key not in actions or key in ("config", "help"):
                raise SpecError(f"unknown config key {key!r}", key)
            if isinstance(actions[key], argparse._StoreTrueAction):  # noqa: SLF001
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise SpecError(f"{key} must be a boolean, got {value!r}", key)
                values[key] = value.lower() in ("true", "1", "yes")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _model(args) -> ModelConfig:
    d = args.d
    k = args.k if args.k is not None else [1] + [0] * max(d - 1, 0)
    args.k = list(k)
    return ModelConfig(H=args.H, d=d, k=tuple(k), t=args.t, epsilon=args.eps)


def _positive(args, *names) -> None:
    for name in names:
        value = getattr(args, name)
        if value is None or value <= 0:
            raise SpecError(f"{name.replace('_', '-')} must be positive, got {value}", name)


def _resolved(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("out", "csv_out", "config", "threads"):
            continue
        out[key] = value
    return out


def _meta(args, extra: dict | None = None) -> dict:
    meta = {"version": __version__, "spec": _resolved(args), "seed": getattr(args, "seed", None)}
    if extra:
        meta.update(extra)
    return meta


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def _meta_line(meta: dict) -> str:
    return f"# dslt {meta['version']} seed={meta['seed']} spec={json.dumps(_clean(meta['spec']), sort_keys=True)}\n"


def _csv_text(header, rows, meta: dict) -> str:
    buf = io.StringIO()
    buf.write(_meta_line(meta))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(args, text: str | bytes) -> None:
    if args.out:
        atomic_write(args.out, text)
    elif isinstance(text, bytes):
        sys.stdout.buffer.write(text)
    else:
        sys.stdout.write(text)


def _regime_warnings(cfg: ModelConfig) -> list[str]:
    from .second_moment import existence_regime

    verdict = existence_regime(cfg.H, cfg.k, cfg.d)
    warnings = []
    if not verdict.l2_exists:
        warnings.append(
            f"H = {cfg.H} is outside the L2 existence regime (H < {verdict.l2_threshold:.6g}); "
            "finite-eps values are reported but need not converge"
        )
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return warnings


def _cmd_simulate(args) -> None:
    from .fbm import sample_paths

    cfg = _model(args)
    _positive(args, "n_paths", "n_steps")
    batch = sample_paths(cfg, args.n_steps, args.n_paths, args.seed, method=args.method)
    meta = _meta(args)
    if args.format == "binary":
        _emit(args, batch.to_bytes())
    elif args.format == "csv":
        buf = io.StringIO()
        batch.write_csv(buf)
        _emit(args, _meta_line(meta) + buf.getvalue())
    else:
        end = batch.values[:, -1, :]
        _emit(args, _dumps({"meta": meta, "n_paths": batch.n_paths, "n_steps": batch.n_steps, "dt": batch.dt,
                            "terminal_mean": end.mean(axis=0), "terminal_variance": end.var(axis=0, ddof=1)
                            if batch.n_paths > 1 else [0.0] * cfg.d,
                            "values": batch.values[:, :, :]}))


def _cmd_estimate(args) -> None:
    from .estimator import dslt_batch, mc_moment

    cfg = _model(args)
    _positive(args, "n_paths", "n_steps", "order")
    if args.y is not None and len(args.y) != cfg.d:
        raise SpecError(f"y has {len(args.y)} coordinates, expected d = {cfg.d}", "y")
    meta = _meta(args, {"warnings": _regime_warnings(cfg)})
    if args.format == "csv":
        values = dslt_batch(cfg, args.n_paths, args.n_steps, args.seed, args.y)
        _emit(args, _csv_text(["path_id", "value"], [[i, repr(float(v))] for i, v in enumerate(values)], meta))
        return
    est = mc_moment(cfg, args.y, args.order, args.n_paths, args.n_steps, args.seed, antithetic=not args.no_antithetic)
    payload = est.to_dict()
    payload.update(meta=meta, n=est.n_samples, cfg=cfg.to_dict())
    _emit(args, _dumps(payload))


def _cmd_second_moment(args) -> None:
    from .second_moment import second_moment_quadrature

    cfg = _model(args)
    if args.eta is not None:
        _positive(args, "eta")
    _positive(args, "rel_tol", "budget")
    meta = _meta(args, {"warnings": _regime_warnings(cfg)})
    result = second_moment_quadrature(cfg, args.eta, args.rel_tol, args.budget)
    payload = result.to_dict()
    payload["meta"] = meta
    _emit(args, _dumps(payload))


def _cmd_clt(args) -> None:
    from .chaos import clt_experiment

    _positive(args, "t", "n_paths", "n_steps", "rel_tol")
    if not args.eps_ladder or any(not 0 < e < 1 for e in args.eps_ladder):
        raise SpecError("eps-ladder entries must lie in (0, 1)", "eps_ladder")
    report = clt_experiment(args.t, args.eps_ladder, args.n_paths, args.n_steps, args.seed, rel_tol=args.rel_tol)
    meta = _meta(args)
    payload = report.to_dict()
    payload["meta"] = meta
    _emit(args, _dumps(payload))
    csv_path = args.csv_out or (str(Path(args.out).with_suffix("")) + "_statistics.csv" if args.out else None)
    if csv_path:
        n = report.n_paths
        rows = [[i, "mirror" if i >= n else "base", repr(float(v))] for i, v in enumerate(report.statistics)]
        atomic_write(csv_path, _csv_text(["path_id", "kind", "normalized_value"], rows, meta))


def _cmd_holder(args) -> None:
    from .regularity import holder_fit, increment_samples, theorem_exponents

    cfg = _model(args)
    _positive(args, "n_paths", "n_steps", "order")
    if args.lags is None:
        args.lags = list(DEFAULT_LAGS[args.variable])
    if len(args.lags) < 2:
        raise SpecError("need at least two lags", "lags")
    meta = _meta(args, {"warnings": _regime_warnings(cfg)})
    samples, used = increment_samples(cfg, args.variable, args.lags, args.n_paths, args.n_steps, args.seed)
    fit = holder_fit(samples, used, args.order, args.variable)
    if args.format == "csv":
        rows = [[repr(h), repr(m), repr(fit.slope), repr(fit.r_squared)] for h, m in fit.rows()]
        _emit(args, _csv_text(["lag", "moment", "exponent", "r_squared"], rows, meta))
        return
    payload = fit.to_dict()
    payload.update(meta=meta, theorem_range=theorem_exponents(cfg.H, cfg.k, cfg.d)[args.variable],
                   caveat=f"fitted at finite eps = {cfg.epsilon}")
    _emit(args, _dumps(payload))


def _cmd_bounds_check(args) -> None:
    from .gaussian_moments import Region, sample_lemma_ratios, sample_region_ratios

    _positive(args, "n_draws")
    if not 0 <= args.max_order <= 10:
        raise SpecError("max-order must be in 0..10", "max_order")
    for H in args.hurst:
        if not 0 < H < 1:
            raise SpecError(f"Hurst index must lie in (0, 1), got {H}", "hurst")
    rows, summary = [], {}
    for m in range(args.max_order + 1):
        pts, exact, bound, ratio = sample_lemma_ratios(m, args.n_draws, args.seed + m)
        case = f"pair_m{m}"
        summary[case] = {"max_ratio": float(ratio.max()), "min_ratio": float(ratio.min())}
        rows += [[case, "", ";".join(repr(float(v)) for v in p), repr(float(e)), repr(float(b)), repr(float(r))]
                 for p, e, b, r in zip(pts, exact, bound, ratio)]
    for region in Region:
        for H in args.hurst:
            gaps, det, lower, ratio = sample_region_ratios(region, H, args.n_draws, args.seed)
            summary[f"{region.value}_H{H:.6g}"] = {"min_ratio": float(ratio.min()), "max_ratio": float(ratio.max())}
            rows += [[region.value, repr(H), ";".join(repr(float(v)) for v in g), repr(float(e)), repr(float(b)),
                      repr(float(r))] for g, e, b, r in zip(gaps, det, lower, ratio)]
    meta = _meta(args)
    if args.format == "csv":
        _emit(args, _csv_text(["case", "H", "point", "exact", "bound", "ratio"], rows, meta))
    else:
        _emit(args, _dumps({"meta": meta, "summary": summary}))


COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "second-moment": _cmd_second_moment,
    "clt": _cmd_clt,
    "holder": _cmd_holder,
    "bounds-check": _cmd_bounds_check,
}


def _set_threads(args) -> None:
    value = args.threads if getattr(args, "threads", None) is not None else os.environ.get(THREADS_ENV)
    if value is None:
        return
    import numba

    n = int(value)
    if n < 1:
        raise SpecError("thread count must be >= 1", "threads")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _fail(message: str, field: str | None, kind: str = "invalid_parameter") -> int:
    print(json.dumps({"error": kind, "field": field, "message": message}, sort_keys=True), file=sys.stderr)
    return EXIT_USAGE


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        _set_threads(args)
        COMMANDS[args.subcommand](args)
    except SpecError as exc:
        return _fail(str(exc), exc.field)
    except DomainError as exc:
        return _fail(str(exc), exc.field)
    except (ValueError, OSError) as exc:
        return _fail(str(exc), None, type(exc).__name__)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
