"""Command-line front end: ``bandlets {denoise,bench,oracle,concentration}``.

Exit codes: 0 success, 2 bad flags or parameters, 3 file or input errors,
4 noise level outside the covered regime (sigma > 1/4).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, OutOfRegimeError, ParameterError, SpecError
from .estimator import (
    denoise,
    denoise_at,
    dictionary_size,
    format_block,
    oracle_cost,
    plan_from_sigma,
)
from .geometry import FlowConfig
from .pyramid import check_image
from .synthlab import concentration_experiment, edge_scene, risk_curve

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_REGIME = 0, 2, 3, 4

DEFAULT_SIGMAS = "0.25,0.125,0.0625,0.03125"
BENCH_LAMBDA = 2.5


# --------------------------------------------------------------------------
# grid files


def _pgm_tokens(data: bytes):
    """Header tokens of a PGM file and the offset just past the last one."""
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise InputError("truncated PGM header")
        tokens.append(data[i:j].decode("ascii"))
        i = j
    return tokens, i + 1


def _read_pgm(data: bytes) -> np.ndarray:
    (magic, w, h, maxval), off = _pgm_tokens(data)
    w, h, maxval = int(w), int(h), int(maxval)
    if w != h:
        raise InputError(f"PGM image must be square, got {w}x{h}")
    if not 0 < maxval < 256:
        raise InputError(f"only 8-bit PGM is supported (maxval {maxval})")
    if magic == "P5":
        raw = np.frombuffer(data[off : off + w * h], dtype=np.uint8)
    else:
        raw = np.array(data[off:].split(), dtype=np.int64)
    if raw.size != w * h:
        raise InputError(f"PGM holds {raw.size} samples, expected {w * h}")
    return raw.reshape(h, w).astype(float) / maxval


def _read_text(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise InputError("empty grid file")
    try:
        side = int(lines[0])
        vals = np.array(" ".join(lines[1:]).split(), dtype=float)
    except ValueError as e:
        raise InputError(f"malformed grid file: {e}") from None
    if vals.size != side * side:
        raise InputError(f"grid declares side {side} but holds {vals.size} values")
    if len(lines) - 1 != side:
        raise InputError(f"grid declares side {side} but has {len(lines) - 1} rows")
    return vals.reshape(side, side)


def read_grid(path) -> np.ndarray:
    """Text grid (``side`` then rows) or 8-bit PGM (P2/P5) scaled to [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] in (b"P2", b"P5"):
        img = _read_pgm(data)
    else:
        try:
            img = _read_text(data.decode("ascii"))
        except UnicodeDecodeError:
            raise InputError(f"{path}: not a text grid or PGM file") from None
    return check_image(img)


def format_grid(img) -> str:
    a = np.asarray(img, dtype=float)
    rows = [" ".join(repr(float(v)) for v in row) for row in a]
    return f"{a.shape[0]}\n" + "\n".join(rows) + "\n"


def write_grid(path, img) -> None:
    """Write a text grid, or 8-bit PGM when ``path`` ends in ``.pgm``."""
    a = check_image(img)
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        q = np.round(np.clip(a, 0.0, 1.0) * 255).astype(np.uint8)
        header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + q.tobytes())
    else:
        path.write_text(format_grid(a))


# --------------------------------------------------------------------------
# commands


def _cfg(args, **extra) -> FlowConfig:
    return FlowConfig(p=args.p, **extra)


def _sigmas(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ParameterError(f"cannot parse sigma list {text!r}") from None
    if not vals:
        raise ParameterError("empty sigma list")
    return vals


def cmd_denoise(args) -> int:
    cfg = _cfg(args)
    if args.baseline:
        cfg = cfg.without_flows()
    obs = read_grid(args.input)
    side = obs.shape[0]
    if args.sigma < 0:
        raise ParameterError("sigma must be non-negative")
    if args.sigma == 0:
        # noise-free: a threshold below every nonzero coefficient keeps them all
        T = float(np.finfo(float).tiny)
        K = dictionary_size(side, cfg)
        info = {"sigma": 0.0, "side": side, "N": side * side, "K_N": K, "T": T,
                "regime": "noise-free"}
    else:
        plan = plan_from_sigma(args.sigma, args.lambda_tilde, cfg, side=side)
        T = plan.T
        info = plan.as_dict()
    if args.sigma == 0:
        F, sel = denoise_at(obs, T, cfg, args.threads)
    else:
        F, sel = denoise(obs, plan, cfg, args.threads)
    write_grid(args.out, F)
    if args.dump_geometry:
        Path(args.dump_geometry).write_text(sel.summary())
    if args.figure:
        from .plotting import plot_denoise

        plot_denoise(obs, F, args.figure, "wavelet baseline" if args.baseline else "bandlet")
    c = sel.cost
    info.update({
        "mode": "baseline" if args.baseline else "bandlet",
        "p": cfg.p, "degree": cfg.degree, "levels": cfg.levels, "max_width": cfg.max_width,
        "threads": args.threads,
        "kept_count": c.kept, "residual_sq": c.residual_sq, "total_cost": c.total,
    })
    sys.stdout.write(format_block(info))
    return EXIT_OK


def cmd_bench(args) -> int:
    sigmas = _sigmas(args.sigmas)
    if args.trials < 1:
        raise ParameterError("--trials must be >= 1")
    cfg = _cfg(args)
    spec = edge_scene(args.alpha, args.contrast, args.blur if args.blur > 0 else None)
    res = risk_curve(spec, sigmas, args.trials, args.lambda_tilde, cfg, seed=args.seed,
                     compare_baseline=args.compare_baseline, threads=args.threads)
    reports = list(res) if args.compare_baseline else [res]
    out = Path(args.out)
    out.write_text(reports[0].to_csv())
    written = [str(out)]
    if args.compare_baseline:
        base = out.with_name(out.stem + "_baseline" + out.suffix)
        base.write_text(reports[1].to_csv())
        written.append(str(base))
    if not args.no_figure:
        from .plotting import plot_risk_curves

        fig = out.with_suffix(".png")
        plot_risk_curves(reports, fig)
        written.append(str(fig))
    plan = plan_from_sigma(min(sigmas), args.lambda_tilde, cfg)
    info = {
        "alpha": args.alpha, "contrast": args.contrast, "blur": args.blur,
        "sigmas": args.sigmas, "trials": args.trials, "seed": args.seed,
        "lambda_tilde": args.lambda_tilde, "p": cfg.p, "degree": cfg.degree,
        "regime": plan.as_dict()["regime"], "threads": args.threads,
        "slope": reports[0].slope, "slope_stderr": reports[0].slope_stderr,
    }
    if args.compare_baseline:
        info["baseline_slope"] = reports[1].slope
    info["written"] = " ".join(written)
    sys.stdout.write(format_block(info))
    return EXIT_OK


def cmd_oracle(args) -> int:
    if not args.T > 0 or not math.isfinite(args.T):
        raise ParameterError(f"--T must be positive, got {args.T}")
    cfg = _cfg(args)
    f = read_grid(args.input)
    rep = oracle_cost(f, args.T, cfg, args.sigma)
    if args.dump_geometry:
        Path(args.dump_geometry).write_text(rep.selection.summary())
    info = {"p": cfg.p, "degree": cfg.degree, "max_width": cfg.max_width,
            "sigma_source": "given" if args.sigma is not None else "from T"}
    info.update(rep.as_dict())
    sys.stdout.write(format_block(info))
    return EXIT_OK


def cmd_concentration(args) -> int:
    if args.trials < 1:
        raise ParameterError("--trials must be >= 1")
    dims = None
    if args.dims:
        try:
            dims = [int(d) for d in args.dims.split(",") if d.strip()]
        except ValueError:
            raise ParameterError(f"cannot parse dims {args.dims!r}") from None
    us = _sigmas(args.u)
    rows = [concentration_experiment(args.K, dims, u, args.trials, args.seed) for u in us]
    print(f"K={args.K} trials={args.trials} seed={args.seed} "
          f"dims={'all' if dims is None else args.dims} exhaustive={str(rows[0].exhaustive).lower()}")
    print("u,violations,frequency,bound,binomial_se,within_3se")
    for r in rows:
        ok = r.frequency <= r.bound + 3 * r.binomial_se
        print(f"{r.u:.10g},{r.violations},{r.frequency:.10g},{r.bound:.10g},"
              f"{r.binomial_se:.10g},{str(ok).lower()}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bandlets", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, threads=True):
        p.add_argument("--p", type=int, default=2, help="vanishing moments (default 2)")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="worker cap (default 1)")

    d = sub.add_parser("denoise", help="denoise a grid image at a known noise level")
    d.add_argument("--input", required=True)
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument("--lambda", dest="lambda_tilde", type=float, default=None,
                   help="threshold multiplier (default: regime bound sqrt(2(p+4)) lambda0(K_N))")
    d.add_argument("--out", required=True)
    d.add_argument("--dump-geometry", default=None)
    d.add_argument("--baseline", action="store_true", help="wavelet thresholding only")
    d.add_argument("--figure", default=None, help="optional PNG of input and output")
    common(d)
    d.set_defaults(func=cmd_denoise)

    b = sub.add_parser("bench", help="Monte Carlo risk curve on the edge scene")
    b.add_argument("--alpha", type=float, default=2.0)
    b.add_argument("--sigmas", default=DEFAULT_SIGMAS)
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="CSV path; the figure goes next to it")
    b.add_argument("--compare-baseline", action="store_true")
    b.add_argument("--lambda", dest="lambda_tilde", type=float, default=BENCH_LAMBDA)
    b.add_argument("--contrast", type=float, default=4.0)
    b.add_argument("--blur", type=float, default=0.06, help="blur support, 0 for a sharp edge")
    b.add_argument("--no-figure", action="store_true")
    common(b)
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="oracle cost and risk bound of a clean image")
    o.add_argument("--input", required=True)
    o.add_argument("--T", type=float, required=True)
    o.add_argument("--sigma", type=float, default=None)
    o.add_argument("--dump-geometry", default=None)
    common(o, threads=False)
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("concentration", help="projected-noise concentration check")
    c.add_argument("--K", type=int, default=64)
    c.add_argument("--u", default="0", help="comma-separated list of u values")
    c.add_argument("--trials", type=int, default=10000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--dims", default=None, help="comma-separated dimensions (default 1..K)")
    c.set_defaults(func=cmd_concentration)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except OutOfRegimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_REGIME
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, SpecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
