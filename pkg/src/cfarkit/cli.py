"""Command-line front end.

Subcommands: detect, simulate, alpha, loss, fit, bench.  Settings are
layered built-in defaults < ``--config`` key=value file < flags.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bench import calibration_sweep, model_selection_study, roc_points
from .detector import DetectorConfig, Law, LogEstimator, Parameterization, Strategy, resolve_alpha
from .engine import default_threads, extract_rois, run_detection
from .errors import CfarError, DataError, InvalidPfa, NotTabulated
from .formats import read_config, write_mask, write_rois_csv
from .loss import LossInputs, loss_report
from .models import alpha_ca_exponential, parse_model, select_model
from .models.distributions import Exponential
from .raster import Domain, SarImage, convert, load_raster, store_raster
from .simulator import SceneSpec, gen_scene, scene_from_config
from .stencil import StencilSpec, boundary_count

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Settings:
    """Flag values layered over a key=value config file and defaults.

    Flags are parsed with ``default=None`` so that an unset flag falls
    through to the config file, then to the caller's default.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: Dict[str, str] = {}
        if getattr(args, "config", None):
            try:
                self.file = read_config(args.config)
            except OSError as exc:
                raise DataError(f"cannot read config: {exc}") from None
            known = {a for a in vars(args)}
            unknown = sorted(set(self.file) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")

    def source(self, key: str) -> Optional[str]:
        if getattr(self.args, key, None) is not None:
            return "flag"
        if key in self.file:
            return "file"
        return None

    def get(self, key: str, default=None, conv: Callable = str):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.file:
            try:
                return conv(self.file[key])
            except ValueError:
                raise UsageError(f"bad value for {key}: {self.file[key]!r}") from None
        return default

    def exclusive(self, a: str, b: str) -> Optional[str]:
        """Which of two mutually exclusive settings applies.

        Both set at the same layer is a usage error; otherwise the higher
        layer wins.
        """
        sa, sb = self.source(a), self.source(b)
        if sa and sb:
            if sa == sb:
                raise UsageError(f"--{a.replace('_', '-')} and --{b.replace('_', '-')} are mutually exclusive")
            return a if sa == "flag" else b
        return a if sa else (b if sb else None)


def _float(text: str) -> float:
    return float(text)


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _pfa(value) -> float:
    pfa = float(value)
    if not 0.0 < pfa < 1.0:
        raise UsageError("pfa must be in (0,1)")
    return pfa


def _threads(settings: Settings) -> int:
    t = settings.get("threads", None, int)
    if t is None:
        return default_threads()
    if t < 1:
        raise UsageError("--threads must be >= 1")
    return t


def _require_seed(settings: Settings) -> int:
    seed = settings.get("seed", None, int)
    if seed is None:
        raise UsageError("--seed is required (no entropy-based default)")
    return seed


def _stencil(settings: Settings) -> StencilSpec:
    try:
        return StencilSpec.parse(
            settings.get("put", "1x1"),
            settings.get("guard", 1, int),
            settings.get("boundary", 1, int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_stencil_flags(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--put", help="PUT size RxC, odd sides (default 1x1)")
    p.add_argument("--guard", type=int, help="guard ring width (default 1)")
    p.add_argument("--boundary", type=int, help="boundary ring width (default 1)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file; flags take precedence")
    p.add_argument("--threads", type=int, help="worker threads (default: $CFARKIT_THREADS or all cores)")


def _detector_config(settings: Settings, need_rule: bool = True) -> DetectorConfig:
    choice = settings.exclusive("pfa", "alpha")
    if need_rule and choice is None:
        raise UsageError("one of --pfa or --alpha is required")
    pfa = _pfa(settings.get("pfa", 1e-3, _float)) if choice == "pfa" else 1e-3
    alpha = settings.get("alpha", None, _float) if choice == "alpha" else None
    background = settings.get("background", None)
    try:
        model = parse_model(background) if background else None
        return DetectorConfig(
            strategy=Strategy(settings.get("method", "ca").lower()),
            parameterization=Parameterization(settings.get("param", "one").lower()),
            law=Law(settings.get("law", "square").lower()),
            pfa=pfa,
            os_q=settings.get("os_q", 0.75, _float),
            alpha_override=alpha,
            background=model,
            log_estimator=LogEstimator(settings.get("log_estimator", "log-of-mean").lower()),
            calibration_trials=settings.get("calibration_trials", 200_000, int),
            calibration_seed=settings.get("seed", 0, int),
        )
    except DataError:
        raise
    except (ValueError, CfarError) as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# subcommands

_LAW_DOMAIN = {Law.LINEAR: Domain.MAGNITUDE, Law.SQUARE: Domain.POWER, Law.LOG: Domain.LOG_POWER}


def cmd_detect(args: argparse.Namespace) -> int:
    s = Settings(args)
    inp = s.get("input")
    out_mask = s.get("out_mask")
    if not inp or not out_mask:
        raise UsageError("--input and --out-mask are required")
    stencil = _stencil(s)
    config = _detector_config(s)
    engine = s.get("engine", "auto")
    border = s.get("border", "valid")
    auto_convert = bool(s.get("auto_convert", False, lambda v: v.lower() in ("1", "true", "yes")))
    threads = _threads(s)
    try:
        image = load_raster(inp)
    except OSError as exc:
        raise DataError(f"cannot read {inp}: {exc}") from None
    wanted = _LAW_DOMAIN[config.law]
    if config.parameterization is Parameterization.TWO:
        wanted = image.domain if image.domain is not Domain.COMPLEX_IQ else Domain.POWER
    if auto_convert and image.domain is not wanted:
        image = convert(image, wanted)
    try:
        result = run_detection(image, stencil, config, engine=engine, threads=threads, border=border)
    except ValueError as exc:
        if isinstance(exc, CfarError):
            raise
        raise UsageError(str(exc)) from None
    write_mask(result.mask, out_mask)
    if s.get("out_rois"):
        rois = extract_rois(
            result.mask,
            min_size=s.get("min_size", 1, int),
            max_size=s.get("max_size", None, int),
            min_separation=s.get("min_separation", 0.0, _float),
            statistic=result.statistic_map,
        )
        write_rois_csv(rois, s.get("out_rois"))
    for key, data in (("out_stat", result.statistic_map), ("out_threshold", result.threshold_map)):
        path = s.get(key)
        if path:
            store_raster(SarImage(np.asarray(data, dtype=np.float32), Domain.POWER, image.looks), path)
    print(
        f"engine={result.engine} alpha={result.alpha:.6g} valid={result.valid_count} "
        f"detections={int(result.mask.sum())}"
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    s = Settings(args)
    seed = _require_seed(s)
    out = s.get("out")
    if not out:
        raise UsageError("--out is required")
    keys = ("width", "height", "looks", "background", "power", "shape", "rate", "shape_g0", "gamma_g0", "targets")
    cfg = {k: str(s.get(k)) for k in keys if s.get(k) is not None}
    cfg["seed"] = str(seed)
    if "width" not in cfg or "height" not in cfg:
        raise UsageError("--width and --height are required")
    try:
        spec = scene_from_config(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    image, truth = gen_scene(spec, _threads(s))
    domain = Domain.parse(s.get("domain", "pow"))
    if domain is Domain.COMPLEX_IQ:
        raise UsageError("simulated scenes have no phase; pick mag, pow or logpow")
    store_raster(convert(image, domain), out)
    if s.get("out_truth"):
        write_mask(truth, s.get("out_truth"))
    print(f"wrote {spec.height}x{spec.width} {domain.value} scene, {len(spec.targets)} targets, seed={seed}")
    return EXIT_OK


def cmd_alpha(args: argparse.Namespace) -> int:
    s = Settings(args)
    pfa = s.get("pfa", None, _float)
    pfa = _pfa(_missing("--pfa") if pfa is None else pfa)
    try:
        model = parse_model(s.get("model", "exp"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = s.get("n", None, int)
    has_stencil = any(s.source(k) for k in ("put", "guard", "boundary"))
    method = s.get("method", "ca").lower()
    if n is not None and has_stencil:
        raise UsageError("--n and the stencil flags are mutually exclusive")
    if n is not None:
        if n < 1:
            raise UsageError("--n must be >= 1")
        if not (isinstance(model, Exponential) and method == "ca"):
            raise UsageError("--n alone only covers CA on exponential clutter; give a stencil instead")
        print(f"{alpha_ca_exponential(n, pfa):.4f}")
        return EXIT_OK
    if not has_stencil:
        raise UsageError("give --n or a stencil (--put/--guard/--boundary)")
    stencil = _stencil(s)
    try:
        config = DetectorConfig(
            strategy=Strategy(method),
            pfa=pfa,
            os_q=s.get("os_q", 0.75, _float),
            background=model,
            calibration_trials=s.get("calibration_trials", 200_000, int),
            calibration_seed=s.get("seed", 0, int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{resolve_alpha(config, stencil):.4f}  (N={boundary_count(stencil)})")
    return EXIT_OK


def _missing(flag: str):
    raise UsageError(f"{flag} is required")


def cmd_loss(args: argparse.Namespace) -> int:
    s = Settings(args)
    pfa = s.get("pfa", None, _float)
    pfa = _pfa(_missing("--pfa") if pfa is None else pfa)
    m = s.get("m", None, int)
    if m is None:
        _missing("--m")
    try:
        rep = loss_report(LossInputs(pfa, m, s.get("method", "ca").lower(), s.get("law", "square").lower()))
    except ValueError as exc:
        if isinstance(exc, CfarError):
            raise
        raise UsageError(str(exc)) from None
    print(f"chi={rep.chi:g}")
    print(f"k={rep.k:g}")
    print(f"m_eff={rep.m_eff:.3f}")
    print(f"ratio={rep.ratio:.5g}")
    print(f"n_log={rep.n_log}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    s = Settings(args)
    inp = s.get("input")
    if not inp:
        raise UsageError("--input is required")
    candidates = _csv_list(s.get("candidates", "exp,rayleigh,weibull,lognormal,gamma"))
    statistic = s.get("statistic", "cvm").lower()
    try:
        image = load_raster(inp)
    except OSError as exc:
        raise DataError(f"cannot read {inp}: {exc}") from None
    if image.domain is Domain.COMPLEX_IQ:
        image = convert(image, Domain.POWER)
    x = np.asarray(image.pixels, dtype=float).ravel()
    sample = s.get("sample", None, int)
    if sample is not None and sample < x.size:
        rng = np.random.Generator(np.random.Philox(_require_seed(s)))
        x = rng.choice(x, size=sample, replace=False)
    try:
        sel = select_model(x, candidates, statistic=statistic, tolerance=s.get("tolerance", None, _float), looks=image.looks)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, CfarError):
            raise
        raise UsageError(str(exc)) from None
    print(f"# {statistic} over {x.size} pixels")
    for rank, r in enumerate(sel, start=1):
        print(f"{rank} {r.family} score={r.score:.6g} model={r.model.spec_string()}")
    for name, why in sel.failures:
        print(f"- {name} failed: {why}")
    return EXIT_OK


def _stencil_list(text: str) -> List[StencilSpec]:
    """``"1x1:2:2,3x3:1:4"`` (put:guard:boundary) into stencils."""
    out = []
    for item in _csv_list(text):
        try:
            put, guard, boundary = item.split(":")
            out.append(StencilSpec.parse(put, int(guard), int(boundary)))
        except ValueError as exc:
            raise UsageError(f"bad stencil {item!r}: {exc}") from None
    return out


def cmd_bench(args: argparse.Namespace) -> int:
    s = Settings(args)
    seed = _require_seed(s)
    experiment = s.get("experiment", "calibration").lower()
    out = s.get("out")
    if not out:
        raise UsageError("--out is required")
    threads = _threads(s)
    width, height = s.get("width", 512, int), s.get("height", 512, int)
    engine = s.get("engine", "auto")
    if experiment == "calibration":
        stencils = _stencil_list(s.get("stencils", "1x1:3:2"))
        strategies = [Strategy(v.lower()) for v in _csv_list(s.get("strategies", "ca"))]
        pfas = [_pfa(v) for v in _csv_list(s.get("pfas", "1e-2,1e-3"))]
        scene = SceneSpec(width, height, looks=s.get("looks", 1, int), seed=seed)
        report = calibration_sweep(
            stencils, strategies, pfas, scene, s.get("trials", 1, int),
            base_config=DetectorConfig(law=Law(s.get("law", "square"))), engine=engine, threads=threads,
        )
    elif experiment == "roc":
        stencil = _stencil_list(s.get("stencils", "1x1:3:2"))[0]
        cfg = {
            "width": width, "height": height, "seed": seed,
            "background": s.get("background", "homogeneous"),
            "targets": s.get("targets", f"{height // 2},{width // 2},3,3,10"),
        }
        try:
            scene = scene_from_config({k: str(v) for k, v in cfg.items()})
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        grid = [float(v) for v in _csv_list(s.get("alpha_grid", "0,1,2,4,8,16,32,64"))]
        config = DetectorConfig(strategy=Strategy(s.get("method", "ca").lower()))
        report = roc_points(scene, stencil, config, grid, s.get("guard_dilation", 1, int), engine, threads)
    elif experiment == "selection":
        generators = {}
        for item in s.get("generators", "exp:mean=1;weibull:shape=1.5,scale=1;lognormal:mu=0,sigma=0.8").split(";"):
            model = parse_model(item.strip())
            generators[model.family] = model
        report = model_selection_study(
            generators,
            _csv_list(s.get("candidates", "exp,weibull,lognormal")),
            s.get("samples", 10_000, int),
            s.get("trials", 100, int),
            seed,
            s.get("statistic", "cvm"),
        )
    else:
        raise UsageError(f"unknown experiment {experiment!r} (calibration, roc, selection)")
    report.write(out)
    sys.stdout.write(report.summary())
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfarkit", description="CFAR detection for SAR imagery.")
    parser.add_argument("--version", action="version", version=f"cfarkit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("detect", help="run a CFAR detector over an F32R image")
    _add_common(p)
    p.add_argument("--input", help="F32R image")
    _add_stencil_flags(p)
    p.add_argument("--method", choices=[s.value for s in Strategy], help="reference strategy (default ca)")
    p.add_argument("--param", choices=["one", "two"], help="one- or two-parameter CFAR (default one)")
    p.add_argument("--law", choices=[l.value for l in Law], help="detector law (default square)")
    p.add_argument("--pfa", type=float, help="requested false-alarm probability")
    p.add_argument("--alpha", type=float, help="explicit threshold factor, statistic units")
    p.add_argument("--os-q", dest="os_q", type=float, help="OS quantile in (0,1] (default 0.75)")
    p.add_argument("--background", help="background model spec for alpha solving, e.g. k:shape=4,rate=4,n=1")
    p.add_argument("--log-estimator", dest="log_estimator", choices=[e.value for e in LogEstimator])
    p.add_argument("--calibration-trials", dest="calibration_trials", type=int, help="Monte Carlo trials for alpha")
    p.add_argument("--seed", type=int, help="seed for Monte Carlo alpha calibration (default 0)")
    p.add_argument("--engine", choices=["auto", "spatial", "fft"])
    p.add_argument("--border", choices=["valid", "reflect"])
    p.add_argument("--auto-convert", dest="auto_convert", action="store_const", const=True,
                   help="convert the input to the law's domain instead of failing")
    p.add_argument("--out-mask", dest="out_mask", help="output MASK path")
    p.add_argument("--out-rois", dest="out_rois", help="output ROI CSV path")
    p.add_argument("--min-size", dest="min_size", type=int, help="smallest ROI kept, pixels")
    p.add_argument("--max-size", dest="max_size", type=int, help="largest ROI kept, pixels")
    p.add_argument("--min-separation", dest="min_separation", type=float, help="merge ROIs closer than this")
    p.add_argument("--out-stat", dest="out_stat", help="output F32R statistic map")
    p.add_argument("--out-threshold", dest="out_threshold", help="output F32R threshold map")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="write a simulated scene and its truth mask")
    _add_common(p)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--looks", type=int)
    p.add_argument("--background", choices=["homogeneous", "heterogeneous", "extreme"])
    p.add_argument("--power", type=float, help="homogeneous backscatter")
    p.add_argument("--shape", type=float, help="heterogeneous Gamma shape")
    p.add_argument("--rate", type=float, help="heterogeneous Gamma rate")
    p.add_argument("--shape-g0", dest="shape_g0", type=float, help="extremely heterogeneous shape")
    p.add_argument("--gamma-g0", dest="gamma_g0", type=float, help="extremely heterogeneous scale")
    p.add_argument("--targets", help='"row,col,rows,cols,multiplier; ..." (top-left corners)')
    p.add_argument("--domain", help="output domain: mag, pow or logpow (default pow)")
    p.add_argument("--seed", type=int, help="required")
    p.add_argument("--out", help="output F32R path")
    p.add_argument("--out-truth", dest="out_truth", help="output truth MASK path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("alpha", help="print the threshold factor for a configuration")
    _add_common(p)
    p.add_argument("--model", help="clutter model spec (default exp)")
    p.add_argument("--n", type=int, help="boundary pixel count (CA, exponential)")
    _add_stencil_flags(p)
    p.add_argument("--method", choices=[s.value for s in Strategy])
    p.add_argument("--pfa", type=float)
    p.add_argument("--os-q", dest="os_q", type=float)
    p.add_argument("--calibration-trials", dest="calibration_trials", type=int)
    p.add_argument("--seed", type=int, help="Monte Carlo seed (default 0)")
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("loss", help="print CFAR-loss inputs")
    _add_common(p)
    p.add_argument("--method", choices=["ca", "goca"])
    p.add_argument("--law", choices=[l.value for l in Law])
    p.add_argument("--pfa", type=float)
    p.add_argument("--m", type=int, help="reference pixel count")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("fit", help="rank clutter models on an image by goodness of fit")
    _add_common(p)
    p.add_argument("--input", help="F32R image")
    p.add_argument("--candidates", help="comma-separated families")
    p.add_argument("--statistic", choices=["cvm", "ad"])
    p.add_argument("--tolerance", type=float, help="score gap treated as a tie (parsimony wins)")
    p.add_argument("--sample", type=int, help="fit a random subset of this many pixels (needs --seed)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="run an experiment and write CSV + summary.txt")
    _add_common(p)
    p.add_argument("--experiment", choices=["calibration", "roc", "selection"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="required")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--looks", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--engine", choices=["auto", "spatial", "fft"])
    p.add_argument("--stencils", help='"put:guard:boundary,..." e.g. 1x1:3:2')
    p.add_argument("--strategies", help="comma-separated strategies")
    p.add_argument("--pfas", help="comma-separated PFAs")
    p.add_argument("--law", choices=[l.value for l in Law])
    p.add_argument("--method", choices=[s.value for s in Strategy])
    p.add_argument("--background", choices=["homogeneous", "heterogeneous", "extreme"])
    p.add_argument("--targets")
    p.add_argument("--alpha-grid", dest="alpha_grid", help="comma-separated threshold factors")
    p.add_argument("--guard-dilation", dest="guard_dilation", type=int)
    p.add_argument("--generators", help='";"-separated model specs')
    p.add_argument("--candidates")
    p.add_argument("--samples", type=int)
    p.add_argument("--statistic", choices=["cvm", "ad"])
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidPfa, NotTabulated) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CfarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
