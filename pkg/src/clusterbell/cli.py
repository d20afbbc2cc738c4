"""Command-line front end.

Every subcommand writes one record per sweep point, as CSV with a header row
(default) or as JSON lines. Floats are written with ``repr`` so they parse
back to the identical double.

Exit codes: 0 success, 2 validation error, 3 oracle residual beyond tolerance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import cluster_field as cf
from . import experiment as ex
from . import spin_chsh as sc
from . import wavepacket as wp

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ORACLE = 3
ORACLE_REL_TOL = 1e-6
ORACLE_ABS_TOL = 1e-14
# user-typed directions such as 0.7071 are renormalised up to this deviation
CLI_DIRECTION_TOL = 1e-3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    points: int
    spacing: str = "linear"

    VARIABLES = ("time", "eta", "separation-r", "trials")

    def __post_init__(self):
        if self.variable not in self.VARIABLES:
            raise ValueError(f"sweep variable must be one of {', '.join(self.VARIABLES)}; got {self.variable!r}")
        if not self.start < self.stop:
            raise ValueError("sweep needs start < stop")
        if self.points < 2:
            raise ValueError("sweep needs at least 2 points")
        if self.spacing not in ("linear", "log"):
            raise ValueError("sweep spacing must be 'linear' or 'log'")
        if self.spacing == "log" and self.start <= 0:
            raise ValueError("logarithmic sweep needs start > 0")

    def values(self) -> list[float]:
        if self.spacing == "log":
            v = np.geomspace(self.start, self.stop, self.points)
        else:
            v = np.linspace(self.start, self.stop, self.points)
        return [float(x) for x in v]

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        """``VAR:START:STOP:POINTS[:linear|log]``"""
        parts = text.split(":")
        if len(parts) not in (4, 5):
            raise argparse.ArgumentTypeError(f"sweep must look like VAR:START:STOP:POINTS[:log], got {text!r}")
        spacing = parts[4] if len(parts) == 5 else "linear"
        spacing = {"lin": "linear", "logarithmic": "log"}.get(spacing, spacing)
        try:
            return cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]), spacing)
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from None


def parse_vector(text: str) -> tuple[float, float, float]:
    try:
        v = tuple(float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"direction must be three comma-separated numbers, got {text!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"direction must have 3 components, got {text!r}")
    return v


def parse_strategy(text: str) -> ex.DetectorStrategy:
    """``adaptive``, a number / ``static:ETA``, or ``schedule:T=ETA,T=ETA,...``."""
    text = text.strip()
    if text.lower() == "adaptive":
        return ex.Adaptive()
    try:
        if text.lower().startswith("schedule:"):
            pts = []
            for item in text.split(":", 1)[1].split(","):
                t, eta = item.split("=")
                pts.append((float(t), float(eta)))
            return ex.Schedule(tuple(pts))
        if text.lower().startswith("static:"):
            text = text.split(":", 1)[1]
        return ex.Static(float(text))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad detector strategy {text!r}: {err}") from None


def strategy_label(strategy: ex.DetectorStrategy) -> str:
    if isinstance(strategy, ex.Adaptive):
        return "adaptive"
    if isinstance(strategy, ex.Static):
        return f"static:{strategy.eta!r}"
    return "schedule:" + ",".join(f"{t!r}={e!r}" for t, e in strategy.points)


# --- output ------------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(text: str):
    """Inverse of format_value for CSV cells."""
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def render(records: list[dict], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "json":
        for rec in records:
            buf.write(json.dumps(rec) + "\n")
        return buf.getvalue()
    if not records:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: format_value(v) for k, v in rec.items()})
    return buf.getvalue()


def read_records(text: str, fmt: str = "csv") -> list[dict]:
    if fmt == "json":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def _map_ordered(fn, items, threads: int):
    """Evaluate fn over items, possibly in parallel; results keep input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- parser --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("output")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--out", metavar="FILE", help="write records here instead of stdout")
    g.add_argument("--config", metavar="PATH", help="flat key=value file; command-line flags win")
    g.add_argument("--units", action="store_true", help="echo the resolved parameter set to stderr before running")


def _physics(p: argparse.ArgumentParser):
    g = p.add_argument_group("packet and detector (natural units by default)")
    g.add_argument("--sigma", type=float, default=1.0, help="initial packet width")
    g.add_argument("--delta", type=float, default=1.0, help="detector window width")
    g.add_argument("--p0", type=float, default=1.0, help="mean momentum of particle 1")
    g.add_argument("--mass", type=float, default=1.0)
    g.add_argument("--hbar", type=float, default=1.0)


def _directions(p: argparse.ArgumentParser):
    ref = sc.tsirelson_setting()
    g = p.add_argument_group("CHSH directions (x,y,z)")
    for name in ("a1", "a2", "b1", "b2"):
        default = ",".join(repr(c) for c in getattr(ref, name).components)
        g.add_argument(f"--{name}", type=parse_vector, default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterbell", description="Cluster property vs CHSH violation simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chsh", help="singlet CHSH value for four directions")
    _common(p)
    _directions(p)

    p = sub.add_parser("lhv-scan", help="classical CHSH bound: extremal scan plus random finite LHV models")
    _common(p)
    p.add_argument("--models", type=int, default=1_000_000)
    p.add_argument("--support", type=int, default=4, help="hidden-variable values per random model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extremal", action="store_true", help="list the 16 deterministic strategies instead")

    p = sub.add_parser("overlap", help="single-side detection probability")
    _common(p)
    _physics(p)
    p.add_argument("--eta", type=parse_strategy, default="adaptive", help="number, 'adaptive' or 'schedule:T=ETA,...'")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--sweep", type=SweepSpec.parse, help="time:... or eta:...")
    p.add_argument("--oracle", action="store_true", help="cross-check against grid propagation")
    p.add_argument("--grid-xmin", type=float)
    p.add_argument("--grid-xmax", type=float)
    p.add_argument("--grid-points", type=int)

    p = sub.add_parser("time-scan", help="static vs adaptive damped CHSH over time")
    _common(p)
    _physics(p)
    _directions(p)
    p.add_argument("--eta-static", type=float, default=1.0)
    p.add_argument("--sweep", type=SweepSpec.parse, default="time:0.01:1000:11:log")

    p = sub.add_parser("field2pt", help="massive scalar equal-time two-point function")
    _common(p)
    p.add_argument("--mass", type=float, default=1.0, help="field mass (inverse length)")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--sweep", type=SweepSpec.parse, help="separation-r:...")
    p.add_argument("--fit", action="store_true", help="emit the fitted decay rate over the sweep range")

    p = sub.add_parser("montecarlo", help="coincidence-counting CHSH estimate")
    _common(p)
    _physics(p)
    _directions(p)
    p.add_argument("--eta", type=parse_strategy, default="adaptive")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--sweep", type=SweepSpec.parse, help="time:... or trials:...")
    p.add_argument("--trials", type=int, default=100_000, help="emitted pairs per setting pair")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("significance", help="pairs needed for a k-sigma violation")
    _common(p)
    _physics(p)
    _directions(p)
    p.add_argument("--eta", type=parse_strategy, default="adaptive")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--sweep", type=SweepSpec.parse, help="time:...")
    p.add_argument("--k", type=float, default=5.0, help="significance level in standard errors")
    return parser


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def read_config(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise CliError(f"cannot read config {path!r}: {err}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        values[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(command)
    if sub is None:
        return
    actions = {a.dest: a for a in sub._actions}
    for key, val in values.items():
        if key not in actions or key in ("help", "config"):
            raise CliError(f"unknown config key {key!r} for {command}")
        if isinstance(actions[key], argparse._StoreTrueAction):
            if val.lower() not in _BOOL_WORDS:
                raise CliError(f"config key {key!r} needs a boolean, got {val!r}")
            values[key] = _BOOL_WORDS[val.lower()]
    sub.set_defaults(**values)


# --- subcommands -----------------------------------------------------------------


def _setting(args) -> sc.ChshSetting:
    try:
        return sc.directions_from([args.a1, args.a2, args.b1, args.b2], tol=CLI_DIRECTION_TOL)
    except ValueError as err:
        raise CliError(str(err)) from None


def _config(args, strategy=None) -> ex.ExperimentConfig:
    kw = dict(sigma=args.sigma, delta=args.delta, p0=args.p0, mass=args.mass, hbar=args.hbar)
    if hasattr(args, "a1"):
        kw["setting"] = _setting(args)
    if strategy is not None:
        kw["strategy"] = strategy
    if hasattr(args, "trials"):
        kw["trials"] = args.trials
    if hasattr(args, "seed"):
        kw["seed"] = args.seed
    return ex.ExperimentConfig(**kw)


def _sweep_values(args, allowed: tuple[str, ...], default_var: str, default_value: float) -> tuple[str, list[float]]:
    if args.sweep is None:
        return default_var, [default_value]
    if args.sweep.variable not in allowed:
        raise CliError(f"{args.command} cannot sweep {args.sweep.variable!r}; choose from {', '.join(allowed)}")
    return args.sweep.variable, args.sweep.values()


def cmd_chsh(args, threads):
    s = _setting(args)
    rho = sc.singlet_state()
    value = sc.chsh_value(rho, s)
    return [{
        "S": value,
        "singlet_closed_form": sc.singlet_chsh_closed_form(s),
        "classical_bound": ex.CLASSICAL_BOUND,
        "violates": abs(value) > ex.CLASSICAL_BOUND,
    }], EXIT_OK


def cmd_lhv_scan(args, threads):
    scan = sc.lhv_extremal_scan()
    if args.extremal:
        return [dict(a1=p[0], a2=p[1], b1=p[2], b2=p[3], S=v) for p, v in scan], EXIT_OK
    if args.models < 1 or args.support < 1:
        raise CliError("--models and --support must be positive")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    done = 0
    while done < args.models:
        n = min(1 << 17, args.models - done)
        w, asg = sc.random_lhv_models(rng, n, args.support)
        worst = max(worst, float(np.max(np.abs(sc.lhv_chsh_values(w, asg)))))
        done += n
    values = [v for _, v in scan]
    return [{
        "models": args.models,
        "support": args.support,
        "seed": args.seed,
        "max_abs_S": worst,
        "extremal_max": max(values),
        "extremal_min": min(values),
        "bound_holds": worst <= ex.CLASSICAL_BOUND + 1e-12,
    }], EXIT_OK


def _grid(args) -> wp.GridSpec | None:
    given = [args.grid_xmin, args.grid_xmax, args.grid_points]
    if all(v is None for v in given):
        return None
    if any(v is None for v in given):
        raise CliError("--grid-xmin, --grid-xmax and --grid-points go together")
    return wp.GridSpec(args.grid_xmin, args.grid_xmax, args.grid_points)


def cmd_overlap(args, threads):
    cfg = _config(args, strategy=args.eta)
    var, values = _sweep_values(args, ("time", "eta"), "time", args.t)
    grid = _grid(args)

    def point(v):
        t = v if var == "time" else args.t
        strategy = ex.Static(v) if var == "eta" else cfg.strategy
        det = wp.DetectorWindow(ex.resolve_eta(strategy, cfg.packet, t), cfg.delta)
        closed = wp.detection_probability_closed(cfg.packet, det, t)
        rec = {"t": t, "tau": cfg.packet.tau(t), "eta": det.eta, "delta": cfg.delta, "p0": cfg.p0, "p_closed": closed}
        if args.oracle:
            cmp = wp.compare_with_oracle(cfg.packet, det, t, grid)
            rec.update(p_numeric=cmp.numeric, residual=cmp.closed - cmp.numeric, rel_residual=cmp.rel_residual,
                       oracle_ok=cmp.within(ORACLE_REL_TOL, ORACLE_ABS_TOL))
        return rec

    records = _map_ordered(point, values, threads)
    code = EXIT_ORACLE if args.oracle and not all(r["oracle_ok"] for r in records) else EXIT_OK
    return records, code


def cmd_time_scan(args, threads):
    var, values = _sweep_values(args, ("time",), "time", 0.0)
    base = _config(args)
    static = base.with_(strategy=ex.Static(args.eta_static))
    adaptive = base.with_(strategy=ex.Adaptive())
    threshold = ex.visibility_threshold(base.setting)

    def point(t):
        ps, pa = ex.joint_detection_probability(static, t), ex.joint_detection_probability(adaptive, t)
        return {
            "t": t,
            "tau": base.packet.tau(t),
            "eta_static": args.eta_static,
            "eta_adaptive": ex.resolve_eta(adaptive.strategy, base.packet, t),
            "p_joint_static": ps,
            "p_joint_adaptive": pa,
            "chsh_static": ex.damped_chsh(static, t),
            "chsh_adaptive": ex.damped_chsh(adaptive, t),
            "static_visible": ps > threshold,
            "adaptive_visible": pa > threshold,
        }

    return _map_ordered(point, values, threads), EXIT_OK


def cmd_field2pt(args, threads):
    params = cf.FieldParams(args.mass)
    var, values = _sweep_values(args, ("separation-r",), "separation-r", args.r)
    if args.fit:
        if args.sweep is None:
            raise CliError("--fit needs --sweep separation-r:RMIN:RMAX:N")
        rate = cf.decay_rate_fit(params, args.sweep.start, args.sweep.stop, args.sweep.points)
        return [{"mass": args.mass, "r_min": args.sweep.start, "r_max": args.sweep.stop, "n": args.sweep.points,
                 "rate": rate, "rate_rel_error": rate / args.mass - 1.0}], EXIT_OK

    def point(r):
        return {
            "r": r,
            "mr": args.mass * r,
            "two_point": cf.two_point(params, r),
            "asymptotic": cf.two_point_asymptotic(params, r),
            "ratio": cf.two_point_ratio(params, r),
        }

    return _map_ordered(point, values, threads), EXIT_OK


def cmd_montecarlo(args, threads):
    cfg = _config(args, strategy=args.eta)
    var, values = _sweep_values(args, ("time", "trials"), "time", args.t)
    records = []
    for v in values:
        run_cfg = cfg.with_(trials=int(round(v))) if var == "trials" else cfg
        t = v if var == "time" else args.t
        rec = ex.estimate_chsh(run_cfg, t, threads=threads).as_dict()
        rec["strategy"] = strategy_label(cfg.strategy)
        rec["seed"] = cfg.seed
        records.append(rec)
    return records, EXIT_OK


def cmd_significance(args, threads):
    cfg = _config(args, strategy=args.eta)
    var, values = _sweep_values(args, ("time",), "time", args.t)
    n_coinc = ex.coincidences_for_significance(cfg.setting, args.k)

    def point(t):
        return {
            "t": t,
            "tau": cfg.packet.tau(t),
            "k": args.k,
            "p_joint": ex.joint_detection_probability(cfg, t),
            "coincidences_needed": n_coinc,
            "trials_required": ex.trials_for_significance(cfg, t, args.k),
        }

    return _map_ordered(point, values, threads), EXIT_OK


COMMANDS = {
    "chsh": cmd_chsh,
    "lhv-scan": cmd_lhv_scan,
    "overlap": cmd_overlap,
    "time-scan": cmd_time_scan,
    "field2pt": cmd_field2pt,
    "montecarlo": cmd_montecarlo,
    "significance": cmd_significance,
}


def _echo_units(args):
    skip = {"command", "format", "out", "config", "units"}
    for key, val in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(val, (ex.Static, ex.Adaptive, ex.Schedule)):
            val = strategy_label(val)
        elif isinstance(val, SweepSpec):
            val = f"{val.variable}:{val.start!r}:{val.stop!r}:{val.points}:{val.spacing}"
        print(f"# {key} = {val}", file=sys.stderr)


_NEGATIVE_VALUE = re.compile(r"^-\.?\d")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -0.5,0,1`` as ``--flag=-0.5,0,1``.

    argparse only accepts bare negative numbers as option values, not
    comma-separated vectors that start with a minus sign.
    """
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and _NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def run(argv: list[str] | None = None, stdout=None) -> int:
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        threads = ex.thread_count()
        if args.units:
            _echo_units(args)
        records, code = COMMANDS[args.command](args, threads)
    except SystemExit as err:  # argparse usage errors
        return int(err.code or 0)
    except CliError as err:
        print(f"clusterbell: error: {err}", file=sys.stderr)
        return err.code
    except (ValueError, TypeError) as err:
        print(f"clusterbell: error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    text = render(records, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    if code == EXIT_ORACLE:
        print("clusterbell: oracle residual beyond tolerance", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())
