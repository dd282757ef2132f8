"""``hybridts`` command line: simulate scenarios, convert domains, run checks.

Exit codes: 0 success or pass, 1 analysis failure or falsification,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import domains, scenarios, stability
from .calculus import euclidean_norm, read_trace_csv, trace_csv_text
from .hybrid import GapPolicy, SolverConfig, SolverError
from .timescale import TimeScaleError, timescale_from_dict

log = logging.getLogger("hybridts")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SCENARIOS = ("example1-continuous", "example1-discrete", "example2", "bouncing-ball", "bouncing-ball-zeno")
CHECKS = ("ugs", "attractivity", "c1", "kweak", "corollary1", "strict")


class UsageError(Exception):
    pass


# ---- parameters ---------------------------------------------------------------------

def _coerce(text: str):
    parts = [p.strip() for p in text.split(",")]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        return text
    return vals if len(vals) > 1 else vals[0]


def parse_params(pairs, config_path=None) -> dict:
    params = {}
    if config_path:
        try:
            params.update(json.loads(Path(config_path).read_text()))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
    for item in pairs or ():
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key.strip()] = _coerce(val)
    return params


def _take(params: dict, key: str, kind=float, default=...):
    if key not in params:
        if default is ...:
            raise UsageError(f"missing required parameter {key!r}")
        return default
    val = params[key]
    try:
        if kind is list:
            vals = [float(v) for v in (val if isinstance(val, list) else [val])]
            if len(vals) != 2:
                raise ValueError
            return vals
        if kind is int:
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        return kind(val)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key!r}: {val!r}") from None


def _check_unknown(params: dict, allowed) -> None:
    extra = set(params) - set(allowed)
    if extra:
        raise UsageError(f"unknown parameters: {', '.join(sorted(extra))}")


def _solver_config(params: dict, horizon: float) -> SolverConfig:
    kw = {"horizon": _take(params, "horizon", float, horizon)}
    for k in ("step", "event_tol", "zeno_tol"):
        if k in params:
            kw[k] = _take(params, k)
    for k in ("max_jumps", "zeno_run"):
        if k in params:
            kw[k] = _take(params, k, int)
    if "gap_ratio" in params:
        kw["gap_policy"] = GapPolicy("geometric", r=_take(params, "gap_ratio"))
    elif "gap" in params:
        kw["gap_policy"] = GapPolicy("constant", delta=_take(params, "gap"))
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---- output ---------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


# ---- simulate ---------------------------------------------------------------------------

def run_simulate(args) -> int:
    params = parse_params(args.param, args.config)
    out = Path(args.out)
    name = args.scenario
    common = {"horizon", "step"}
    if name == "example1-continuous":
        _check_unknown(params, {"x0"} | common)
        sig, report = scenarios.example1_continuous(
            _take(params, "x0", list), _take(params, "horizon", float, 5.0), _take(params, "step", float, 1e-3))
        files = {}
    elif name == "example1-discrete":
        _check_unknown(params, {"x0", "r", "n_steps"})
        sig, report = scenarios.example1_discrete(
            _take(params, "x0", list), _take(params, "r"), _take(params, "n_steps", int, 10))
        files = {}
    elif name == "example2":
        _check_unknown(params, {"x0", "event_tol"} | common)
        sig, elog = scenarios.example2_switched(
            _take(params, "x0", list), _take(params, "horizon", float, 60.0),
            _take(params, "step", float, 1e-4), _take(params, "event_tol", float, 1e-12))
        report = scenarios.example2_report(sig, elog)
        report["switch_log"] = elog.to_dict()
        files = {}
    elif name == "bouncing-ball":
        _check_unknown(params, {"h0", "v0", "g", "theta", "event_tol", "zeno_tol", "zeno_run",
                                "max_jumps", "gap", "gap_ratio"} | common)
        h0, v0, g, th = (_take(params, k) for k in ("h0", "v0", "g", "theta"))
        if not (g > 0 and 0 <= th < 1 and h0 >= 0):
            raise UsageError("need g > 0, 0 <= theta < 1 and h0 >= 0")
        t_inf = scenarios.ball_closed_form(h0, v0, g, th, 1)["t_inf"]
        cfg = _solver_config(params, t_inf + 1.0)
        sig, table = scenarios.bouncing_ball(h0, v0, g, th, cfg)
        report = scenarios.bouncing_ball_report(table, h0, v0, g, th)
        report["solver"] = cfg.to_dict()
        report["termination"] = sig.meta["reason"]
        files = {"impacts.csv": table.to_csv()}
    elif name == "bouncing-ball-zeno":
        _check_unknown(params, {"h0", "v0", "g", "theta", "zeno_tol", "step", "post_horizon"})
        h0, v0, g, th = (_take(params, k) for k in ("h0", "v0", "g", "theta"))
        if not (g > 0 and 0 <= th < 1 and h0 >= 0):
            raise UsageError("need g > 0, 0 <= theta < 1 and h0 >= 0")
        sig, trace = scenarios.bouncing_ball_zeno(
            h0, v0, g, th, _take(params, "zeno_tol", float, 1e-6), _take(params, "step", float, 1e-3),
            _take(params, "post_horizon", float, 1.0))
        gaps = sig.dom.gaps()
        report = {"scenario": name, "t_inf": sig.meta["t_inf"], "zeno_closure": sig.meta["zeno_closure"],
                  "resolved_impacts": sig.meta["resolved_impacts"], "gap_total": float(gaps.sum()),
                  "domain": sig.dom.to_dict()}
        files = {"realtime.json": trace.to_json() + "\n"}
    else:  # argparse restricts the choices
        raise UsageError(f"unknown scenario {name!r}")
    report["seed"] = args.seed
    report["params"] = params
    _write(out, "trace.csv", trace_csv_text(sig))
    for fname, text in files.items():
        _write(out, fname, text)
    _write(out, "report.json", _dump(_clean(report)))
    return EXIT_OK


# ---- convert ----------------------------------------------------------------------------

def run_convert(args) -> int:
    out = Path(args.out)
    if args.random is not None:
        rng = np.random.default_rng(args.seed)
        worst_htd = 0.0
        failures = 0
        for _ in range(args.random):
            htd = domains.random_hybrid_time_domain(rng)
            I = domains.to_gts(htd)
            back = domains.to_htd(I)
            dev = htd.max_deviation(back)
            worst_htd = max(worst_htd, dev)
            again = domains.to_gts(back)
            if dev > 1e-12 or not _same_scale(again, I, 1e-12):
                failures += 1
        result = {"random": args.random, "seed": args.seed, "failures": failures,
                  "max_breakpoint_deviation": worst_htd}
        _write(out, "roundtrip.json", _dump(result))
        print(_dump(result), end="")
        return EXIT_OK if failures == 0 else EXIT_FAIL
    if not args.input:
        raise UsageError("convert needs an input file or --random N")
    try:
        data = json.loads(Path(args.input).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from None
    result = {"seed": args.seed}
    if "pieces" in data:
        try:
            htd = domains.HybridTimeDomain.from_dict(data)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"malformed hybrid time domain: {exc}") from None
        I = domains.to_gts(htd)
        result["direction"] = "htd2gts"
        result["output"] = I.to_dict()
        if args.roundtrip:
            back = domains.to_htd(I)
            result["roundtrip_deviation"] = htd.max_deviation(back)
            result["roundtrip_ok"] = result["roundtrip_deviation"] <= 1e-12
    elif "segments" in data or "lattice" in data:
        try:
            I = timescale_from_dict(data)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"malformed time scale: {exc}") from None
        try:
            htd = domains.to_htd(I, horizon=args.horizon)
        except domains.NotInHError as exc:
            print(f"hybridts: input is not in H: {exc}", file=sys.stderr)
            return EXIT_FAIL
        except domains.DomainError as exc:
            raise UsageError(str(exc)) from None
        result["direction"] = "gts2htd"
        result["output"] = htd.to_dict()
        if args.roundtrip:
            again = domains.to_gts(htd, I.tol_t)
            target = I if hasattr(I, "segments") else I.restrict(0.0, args.horizon)
            result["roundtrip_ok"] = _same_scale(again, target, 1e-12)
    else:
        raise UsageError("input is neither a hybrid time domain nor a time scale")
    _write(out, "converted.json", _dump(_clean(result)))
    print(_dump(_clean(result)), end="")
    return EXIT_OK if result.get("roundtrip_ok", True) else EXIT_FAIL


def _same_scale(a, b, tol) -> bool:
    if len(a.segments) != len(b.segments) or a.tail != b.tail:
        return False
    for s, t in zip(a.segments, b.segments):
        if abs(s.lo - t.lo) > tol:
            return False
        if not (math.isinf(s.hi) and math.isinf(t.hi)) and abs(s.hi - t.hi) > tol:
            return False
    return True


# ---- check ------------------------------------------------------------------------------

def _scalarizer(name: str):
    if name == "norm":
        return euclidean_norm
    if name == "squared-norm":
        return scenarios.squared_norm
    if name == "example2":
        return scenarios.example2_V
    raise UsageError(f"unknown scalarizer {name!r} (norm, squared-norm, example2)")


def _kinf(text):
    try:
        return stability.parse_kinf(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _ensemble(args, params):
    """Signals from trace files or from a seeded scenario ensemble."""
    rng = np.random.default_rng(args.seed)
    logs = None
    if args.trace:
        sigs = []
        for path in args.trace:
            try:
                sigs.append(read_trace_csv(path))
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot read trace {path}: {exc}") from None
        return stability.Ensemble(sigs, euclidean_norm), None
    name = args.scenario
    if name is None:
        raise UsageError("check needs --scenario or --trace")
    n = args.ensemble
    if name == "example1-continuous":
        _check_unknown(params, {"x0", "horizon", "step"})
        horizon, step = _take(params, "horizon", float, 5.0), _take(params, "step", float, 1e-3)
        if "x0" in params:
            sigs = [scenarios.example1_continuous(_take(params, "x0", list), horizon, step)[0]]
        else:
            sigs = [scenarios.example1_continuous(rng.uniform(-1, 1, 2), horizon, step)[0]
                    for _ in range(n or 20)]
    elif name == "example1-discrete":
        _check_unknown(params, {"x0", "r", "n_steps"})
        r, k = _take(params, "r"), _take(params, "n_steps", int, 10)
        if "x0" in params:
            sigs = [scenarios.example1_discrete(_take(params, "x0", list), r, k)[0]]
        else:
            sigs = [scenarios.example1_discrete(rng.uniform(-0.05, 0.05, 2), r, k)[0] for _ in range(n or 20)]
    elif name == "example2":
        _check_unknown(params, {"x0", "horizon", "step"})
        horizon, step = _take(params, "horizon", float, 60.0), _take(params, "step", float, 1e-4)
        if "x0" in params:
            s, lg = scenarios.example2_switched(_take(params, "x0", list), horizon, step)
            sigs, logs = [s], [lg]
        else:
            sigs, logs = scenarios.example2_ensemble(rng, n or 5, horizon, step)
    elif name in ("bouncing-ball", "bouncing-ball-zeno"):
        _check_unknown(params, {"h0", "v0", "g", "theta"})
        h0, v0 = _take(params, "h0", float, 0.0), _take(params, "v0", float, 1.0)
        g, th = _take(params, "g", float, 2.0), _take(params, "theta", float, 0.5)
        if name == "bouncing-ball":
            sigs = [scenarios.bouncing_ball(h0, v0, g, th)[0]]
        else:
            sigs = [scenarios.bouncing_ball_zeno(h0, v0, g, th)[0]]
    else:
        raise UsageError(f"unknown scenario {name!r}")
    return stability.Ensemble(sigs, euclidean_norm), logs


def run_check(args) -> int:
    params = parse_params(args.param, args.config)
    E, logs = _ensemble(args, params)
    kind = args.check
    if kind == "ugs":
        rep = stability.check_ugs(E, _kinf(args.beta or "identity"))
    elif kind == "attractivity":
        _need(args, "eps", "T")
        rep = stability.check_attractivity(E, args.eps, args.T)
    elif kind == "c1":
        _need(args, "eps", "T")
        rep = stability.falsify_c1(E, args.eps, args.T)
    elif kind == "kweak":
        V = _scalarizer(args.V or ("example2" if args.scenario == "example2" else "squared-norm"))
        if args.gamma == "fitted":
            if not logs:
                raise UsageError("--gamma fitted needs the example2 scenario")
            fits = [scenarios.fit_growth(s, lg) for s, lg in zip(E.signals, logs) if not lg.trivial]
            M = max(f["M"] for f in fits)
            tau = max(f["tau_max"] for f in fits)
            gamma = stability.exp_growth_gamma(1.0, M, tau)
        else:
            gamma = _kinf(args.gamma or "identity")
        rep = stability.check_k_weak(E, V, _kinf(args.alpha or "power:1,2"), _kinf(args.beta or "power:1,2"), gamma)
    elif kind == "corollary1":
        _need(args, "eps", "T", "M", "delta")
        V = _scalarizer(args.V or ("example2" if args.scenario == "example2" else "squared-norm"))
        beta = _kinf(args.beta) if args.beta else None
        rep = stability.check_corollary1(E, V, args.M, args.eps, args.T, args.delta, beta)
    elif kind == "strict":
        V = _scalarizer(args.V or "squared-norm")
        gamma = _kinf(args.gamma or "power:2,2")
        reps = [stability.check_strict_decrease(s, V, gamma, euclidean_norm, args.slack) for s in E.signals]
        bad = [(i, r) for i, r in enumerate(reps) if not r.passed]
        rep = bad[0][1] if bad else min(reps, key=lambda r: r.margin)
        if bad:
            rep.witness["signal"] = bad[0][0]
    else:
        raise UsageError(f"unknown check {kind!r}")
    doc = rep.to_dict()
    doc["seed"] = args.seed
    doc["scenario"] = args.scenario
    doc["scenario_params"] = params
    text = _dump(_clean(doc))
    _write(Path(args.out), "report.json", text)
    print(text, end="")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.check} needs " + ", ".join("--" + m for m in missing))


# ---- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridts", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--param", action="append", default=[], metavar="K=V",
                        help="parameter, repeatable; vectors as comma lists (x0=1,0)")
        sp.add_argument("--config", help="JSON file with a parameter block")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")

    sp = sub.add_parser("simulate", help="run a scenario and write trace CSV plus report JSON")
    sp.add_argument("scenario", choices=SCENARIOS)
    common(sp)
    sp.set_defaults(func=run_simulate)

    sp = sub.add_parser("convert", help="convert between hybrid time domains and time scales")
    sp.add_argument("input", nargs="?", help="JSON file (direction detected from its keys)")
    sp.add_argument("--roundtrip", action="store_true", help="also convert back and compare")
    sp.add_argument("--random", type=int, metavar="N", help="round-trip N random domains instead")
    sp.add_argument("--horizon", type=float, help="window for converting lattices")
    common(sp)
    sp.set_defaults(func=run_convert)

    sp = sub.add_parser("check", help="run a stability check on traces or a scenario ensemble")
    sp.add_argument("check", choices=CHECKS)
    sp.add_argument("--scenario", choices=SCENARIOS)
    sp.add_argument("--trace", action="append", help="trace CSV, repeatable")
    sp.add_argument("--ensemble", type=int, help="number of random initial states")
    sp.add_argument("--alpha")
    sp.add_argument("--beta")
    sp.add_argument("--gamma", help="class-K-infinity spec, or 'fitted' for example2")
    sp.add_argument("--V", help="scalarizer: norm, squared-norm, example2")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--T", type=float)
    sp.add_argument("--M", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--slack", type=float)
    common(sp)
    sp.set_defaults(func=run_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hybridts: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, TimeScaleError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"hybridts: numeric failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
