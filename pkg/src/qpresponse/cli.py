"""Command-line front end.

Problems are described in a TOML file with the sections ``[problem]``,
``[numerics]``, ``[monodromy]``, ``[frequency]`` and ``[verify]``. See
``qpresponse/data/standard.toml`` for a complete example.

Exit codes: 0 on success, 1 on input or configuration errors, 2 when the
mathematics fails (resonance, no contraction, missing real branch, ...).
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import operator
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, QPResponseError, SolverError
from .fourier import NormParams, read_coefficients, write_coefficients
from .linear_ops import estimate_diophantine
from .problem import FourierTaylor, HomogeneousMap, ProblemSpec, validate
from .solver import ContractionConfig, monodromy_continuation, solve
from .verify import residual_norm, rk4_shadow, scaling_study

log = logging.getLogger("qpresponse")

EXIT_OK, EXIT_CONFIG, EXIT_MATH = 0, 1, 2
MAX_D, MAX_N = 4, 8
MIN_MONODROMY_STEPS = 64


def max_truncation(d: int) -> int:
    """Largest K accepted for dimension d (dense products cost ~ K^(2d))."""
    return 256 if d == 1 else 64 if d == 2 else 16


def bundled_config() -> Path:
    """Path of the bundled standard-problem config."""
    return Path(str(resources.files("qpresponse") / "data" / "standard.toml"))


# ---------------------------------------------------------------------------
# frequency expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_NAMES = {"golden": (1 + math.sqrt(5)) / 2}


def eval_frequency(expr: str | float | int) -> float:
    """Evaluate a frequency entry.

    Accepts numbers and strings built from integer or float literals, ``+ - * /``,
    parentheses, ``sqrt(<nonnegative integer>)`` and the name ``golden``
    (the golden mean). Anything else is rejected.

    >>> eval_frequency("(sqrt(5) - 1)/2") == (5 ** 0.5 - 1) / 2
    True
    """
    if isinstance(expr, bool):
        raise ConfigError("frequency must be a number or an expression string")
    if isinstance(expr, (int, float)):
        return float(expr)
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse frequency expression {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id == "sqrt"
            and len(node.args) == 1
            and not node.keywords
            and isinstance(node.args[0], ast.Constant)
            and type(node.args[0].value) is int
            and node.args[0].value >= 0
        ):
            return math.sqrt(node.args[0].value)
        raise ConfigError(f"frequency expression {expr!r}: unsupported element {ast.dump(node)[:40]}")

    try:
        val = float(ev(tree))
    except ZeroDivisionError as exc:
        raise ConfigError(f"frequency expression {expr!r} divides by zero") from exc
    if not math.isfinite(val):
        raise ConfigError(f"frequency expression {expr!r} is not finite")
    return val


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class RunConfig:
    problem: ProblemSpec
    K: int
    norm: NormParams
    contraction: ContractionConfig
    grid_size: int = 256
    l2_mean: str = "balance"
    monodromy: dict = field(default_factory=dict)
    frequency: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    out: str | None = None
    source: str = ""


def _section(tree: dict, name: str) -> dict:
    sec = tree.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _get(sec: dict, where: str, key: str, kind, default=None, required: bool = False):
    if key not in sec:
        if required:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    val = sec[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {val!r}")
    return val


def _complex(val, where: str) -> complex:
    if isinstance(val, bool):
        raise ConfigError(f"{where}: expected a number or [re, im]")
    if isinstance(val, (int, float)):
        return complex(float(val))
    if isinstance(val, list) and len(val) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        return complex(float(val[0]), float(val[1]))
    raise ConfigError(f"{where}: expected a number or [re, im], got {val!r}")


def _known_keys(sec: dict, where: str, allowed: set[str]) -> None:
    extra = sorted(set(sec) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _coefficient(term: dict, where: str, n: int):
    re = term.get("re", 0.0)
    im = term.get("im", 0.0)
    if n == 1:
        return complex(_complex(re, f"{where}.re").real, _complex(im, f"{where}.im").real)
    out = []
    for part, name in ((re, "re"), (im, "im")):
        if isinstance(part, (int, float)) and not isinstance(part, bool) and part == 0:
            part = [0.0] * n
        if not isinstance(part, list) or len(part) != n:
            raise ConfigError(f"{where}.{name}: expected a list of {n} numbers")
        out.append(np.array([_complex(v, f"{where}.{name}").real for v in part]))
    return out[0] + 1j * out[1]


def _terms(raw, where: str, d: int, n: int) -> FourierTaylor:
    if raw is None:
        return FourierTaylor((), d, n)
    if not isinstance(raw, list):
        raise ConfigError(f"{where}: expected an array of tables")
    terms = []
    for i, term in enumerate(raw):
        w = f"{where}[{i}]"
        if not isinstance(term, dict):
            raise ConfigError(f"{w}: expected a table with degree, k, re, im")
        _known_keys(term, w, {"degree", "k", "re", "im"})
        j = _get(term, w, "degree", int, 0)
        if j < 0:
            raise ConfigError(f"{w}.degree: must be >= 0")
        k = term.get("k", [0] * d)
        if isinstance(k, int) and not isinstance(k, bool):
            k = [k]
        if not isinstance(k, list) or len(k) != d or not all(isinstance(x, int) and not isinstance(x, bool) for x in k):
            raise ConfigError(f"{w}.k: expected {d} integers")
        terms.append((j, tuple(k), _coefficient(term, w, n)))
    try:
        return FourierTaylor(terms, d, n)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _phi(raw, n: int, l: int) -> HomogeneousMap | None:
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise ConfigError("problem.phi: expected an array of tables")
    mons = []
    for i, m in enumerate(raw):
        w = f"problem.phi[{i}]"
        if not isinstance(m, dict):
            raise ConfigError(f"{w}: expected a table with component, exponents, coef")
        _known_keys(m, w, {"component", "exponents", "coef"})
        comp = _get(m, w, "component", int, required=True)
        exps = m.get("exponents")
        if not isinstance(exps, list) or not all(isinstance(e, int) and not isinstance(e, bool) for e in exps):
            raise ConfigError(f"{w}.exponents: expected a list of integers")
        mons.append((comp, exps, _complex(m.get("coef", 1.0), f"{w}.coef")))
    try:
        return HomogeneousMap(n, l, mons)
    except ConfigError as exc:
        raise ConfigError(f"problem.phi: {exc}") from exc


_PROBLEM_KEYS = {"l", "omega", "epsilon", "n", "mode", "branch", "real_only", "delta", "a0_guess", "label", "f", "h", "phi"}
_NUMERIC_KEYS = {"K", "rho", "m", "grid_size", "ball_factor", "tol_step", "max_iter", "retry_halvings", "l2_mean"}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse TOML text into a :class:`RunConfig`.

    Raises:
        ConfigError: with the line (for syntax errors) or the dotted field
            name (for bad values) in the message.
    """
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    _known_keys(tree, source, {"problem", "numerics", "monodromy", "frequency", "verify", "output"})
    prob = _section(tree, "problem")
    _known_keys(prob, "problem", _PROBLEM_KEYS)
    num = _section(tree, "numerics")
    _known_keys(num, "numerics", _NUMERIC_KEYS)

    omega_raw = prob.get("omega")
    if omega_raw is None:
        raise ConfigError("problem.omega: required field missing")
    if not isinstance(omega_raw, list):
        omega_raw = [omega_raw]
    omega = []
    for i, w in enumerate(omega_raw):
        try:
            omega.append(eval_frequency(w))
        except ConfigError as exc:
            raise ConfigError(f"problem.omega[{i}]: {exc}") from exc
    d = len(omega)
    if not 1 <= d <= MAX_D:
        raise ConfigError(f"problem.omega: dimension d={d} outside 1..{MAX_D}")
    n = _get(prob, "problem", "n", int, 1)
    if not 1 <= n <= MAX_N:
        raise ConfigError(f"problem.n: {n} outside 1..{MAX_N}")
    l = _get(prob, "problem", "l", int, required=True)

    K = _get(num, "numerics", "K", int, 32)
    if not 1 <= K <= max_truncation(d):
        raise ConfigError(f"numerics.K: {K} outside 1..{max_truncation(d)} for d={d}")
    norm = NormParams(_get(num, "numerics", "rho", float, 0.1), _get(num, "numerics", "m", float, float(d + 1)))
    try:
        norm.check_algebra(d)
    except ConfigError as exc:
        raise ConfigError(f"numerics.rho/m: {exc}") from exc
    cc = ContractionConfig(
        ball_factor=_get(num, "numerics", "ball_factor", float, 0.5),
        tol_step=_get(num, "numerics", "tol_step", float, 1e-12),
        max_iter=_get(num, "numerics", "max_iter", int, 200),
        retry_halvings=_get(num, "numerics", "retry_halvings", int, 6),
    )
    grid = _get(num, "numerics", "grid_size", int, 256 if d == 1 else 64 if d == 2 else 16)
    if grid < 2:
        raise ConfigError("numerics.grid_size: must be >= 2")
    l2_mean = _get(num, "numerics", "l2_mean", str, "balance")
    if l2_mean not in ("balance", "minimal"):
        raise ConfigError(f"numerics.l2_mean: expected 'balance' or 'minimal', got {l2_mean!r}")

    f = _terms(prob.get("f"), "problem.f", d, n)
    h = _terms(prob.get("h"), "problem.h", d, n)
    a0 = prob.get("a0_guess")
    if a0 is not None and (not isinstance(a0, list) or len(a0) != n):
        raise ConfigError(f"problem.a0_guess: expected a list of {n} numbers")
    delta = prob.get("delta")
    if delta is not None:
        delta = _get(prob, "problem", "delta", float)
    try:
        spec = ProblemSpec(
            l=l,
            omega=omega,
            epsilon=_complex(prob.get("epsilon", 0.0), "problem.epsilon"),
            f=f,
            h=h,
            delta=delta,
            phi=_phi(prob.get("phi"), n, l),
            mode=_get(prob, "problem", "mode", str, "response"),
            branch=_get(prob, "problem", "branch", int, 0),
            real_only=_get(prob, "problem", "real_only", bool, True),
            a0_guess=None if a0 is None else [float(_complex(v, "problem.a0_guess").real) for v in a0],
            label=_get(prob, "problem", "label", str, ""),
        )
    except ConfigError as exc:
        raise ConfigError(f"problem: {exc}") from exc
    if spec.epsilon == 0 and spec.mode != "monodromy":
        raise ConfigError("problem.epsilon: must be nonzero")
    out = _section(tree, "output")
    _known_keys(out, "output", {"dir"})
    return RunConfig(
        problem=spec,
        K=K,
        norm=norm,
        contraction=cc,
        grid_size=grid,
        l2_mean=l2_mean,
        monodromy=_section(tree, "monodromy"),
        frequency=_section(tree, "frequency"),
        verify=_section(tree, "verify"),
        out=_get(out, "output", "dir", str),
        source=source,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(x: Any):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = Path(args.out or (cfg.out if cfg and cfg.out else "qpresponse_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem_summary(cfg: RunConfig) -> dict:
    p = cfg.problem
    return {
        "l": p.l,
        "omega": list(p.omega),
        "epsilon": p.epsilon,
        "n": p.n,
        "mode": p.mode,
        "branch": p.branch,
        "real_only": p.real_only,
        "delta": p.delta,
        "K": cfg.K,
        "rho": cfg.norm.rho,
        "m": cfg.norm.m,
        "source": Path(cfg.source).name,
    }


def _check_structure(cfg: RunConfig) -> None:
    rep = validate(cfg.problem, cfg.K)
    if not rep.ok:
        raise ConfigError(rep.summary())


def _csv_floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc
    return vals


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    _check_structure(cfg)
    out = _out_dir(args, cfg)
    report = {"problem": _problem_summary(cfg)}
    try:
        r = solve(cfg.problem, cfg.K, cfg.norm, cfg.contraction, cfg.grid_size, cfg.l2_mean)
    except SolverError as exc:
        report.update(status="failed", error=type(exc).__name__, message=str(exc))
        write_json(out / "report.json", report)
        raise
    report.update(status="converged", solution=r.to_dict())
    write_json(out / "report.json", report)
    with open(out / "coefficients.csv", "w") as fh:
        write_coefficients(r.solution, fh)
    for w in r.warnings:
        log.warning(w)
    log.info(
        "converged: a=%s iterations=%d lambda_hat=%.3g residual=%.3g",
        r.a,
        r.iterations,
        r.lambda_hat,
        r.residual.sup,
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.problem.mode != "response":
        raise ConfigError(f"sweep needs problem.mode = 'response', got {cfg.problem.mode!r}")
    _check_structure(cfg)
    eps = _csv_floats(args.epsilons, "--epsilons") if args.epsilons else [1e-2, 1e-3, 1e-4]
    eps = sorted(eps, key=abs, reverse=True)
    rep = scaling_study(cfg.problem, eps, cfg.K, cfg.norm, cfg.contraction, cfg.grid_size)
    out = _out_dir(args, cfg)
    for i, r in enumerate(rep.reports):
        write_json(out / f"report_eps{i}.json", {"epsilon": eps[i], "problem": _problem_summary(cfg), "solution": r.to_dict()})
    with open(out / "scaling.csv", "w") as fh:
        if not rep.complete:
            fh.write(f"# incomplete: {rep.error}\n")
        rep.write_table(fh)
    with open(out / "scaling_fit.csv", "w") as fh:
        if not rep.complete:
            fh.write("# incomplete: fit uses the converged rows only\n")
        rep.write_fit(fh)
    if not rep.complete:
        log.error("sweep stopped early: %s", rep.error)
        return EXIT_MATH
    log.info("slopes: %s", ", ".join(f"{k}={v:.12g}" for k, v in rep.slopes.items()))
    return EXIT_OK


def cmd_monodromy(args) -> int:
    cfg = load_config(args.config)
    sec = cfg.monodromy
    alpha = args.alpha if args.alpha is not None else float(sec.get("alpha", 1e-3))
    loops = args.loops if args.loops is not None else int(sec.get("loops", 1))
    steps = args.steps if args.steps is not None else int(sec.get("steps", 128))
    cone = float(sec.get("cone_constant", 0.5))
    K = int(sec.get("K", min(cfg.K, 16)))
    if steps < MIN_MONODROMY_STEPS:
        raise ConfigError(f"--steps: {steps} is below the minimum {MIN_MONODROMY_STEPS}")
    rep = monodromy_continuation(cfg.problem, alpha, loops, steps, cone, K, cfg.norm, cfg.contraction)
    out = _out_dir(args, cfg)
    with open(out / "monodromy.csv", "w") as fh:
        rep.write_table(fh)
    summary = {
        "alpha": alpha,
        "loops": loops,
        "steps_per_loop": steps,
        "cone_constant": cone,
        "ratio": rep.ratio,
        "expected_ratio": complex(np.exp(2j * np.pi * loops / cfg.problem.l)),
        "max_jump_excess": rep.max_jump_excess,
        "jumps_checked": rep.jumps_checked,
        "failed_steps": sum(1 for s in rep.steps if s.status.startswith("failed")),
    }
    write_json(out / "monodromy.json", summary)
    log.info("a(end)/a(start) = %.15g%+.15gj", rep.ratio.real, rep.ratio.imag)
    return EXIT_OK


def cmd_check_frequency(args) -> int:
    cfg = load_config(args.config)
    sec = cfg.frequency
    etas = _csv_floats(args.etas, "--etas") if args.etas else [float(x) for x in sec.get("etas", [0.05, 0.1, 0.2])]
    taus = _csv_floats(args.taus, "--taus") if args.taus else [float(x) for x in sec.get("taus", [1.0, 2.0])]
    table = estimate_diophantine(cfg.problem.omega, cfg.K, sorted(etas), sorted(taus))
    out = _out_dir(args, cfg)
    with open(out / "diophantine.csv", "w") as fh:
        table.write(fh)
    for kind, val, g, k in table.rows:
        log.info("%s=%g gamma=%.6g argmin k=%s", kind, val, g, k)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    src = Path(args.report or args.out or cfg.out or "qpresponse_out")
    try:
        saved = json.loads((src / "report.json").read_text())
        with open(src / "coefficients.csv") as fh:
            sol = read_coefficients(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load saved solve from {src}: {exc}") from exc
    if saved.get("status") != "converged":
        raise ConfigError(f"{src / 'report.json'} does not hold a converged solve")
    a_raw = saved["solution"]["a"]
    if a_raw is None:
        a = 0.0
    elif isinstance(a_raw, list):
        a = np.array([complex(z["re"], z["im"]) for z in a_raw])
    else:
        a = complex(a_raw["re"], a_raw["im"])
    p = cfg.problem
    res = residual_norm(p, a, sol, cfg.grid_size)
    result = {"residual": res.to_dict()}
    sec = cfg.verify
    if sec.get("shadow", False):
        if p.n != 1 or p.mode != "response":
            raise ConfigError("verify.shadow needs a scalar problem in response mode")
        sh = rk4_shadow(p, a, sol, float(sec.get("t_span", 50.0)), float(sec.get("dt", 1e-3)))
        result["shadow"] = {
            "max_error": sh.max_error,
            "direction": sh.direction,
            "steps": sh.steps,
            "dt": sh.dt,
            "local_error_estimate": sh.local_error_estimate,
        }
    out = Path(args.out) if args.out else src
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "verify.json", result)
    log.info("residual sup=%.3g l2=%.3g", res.sup, res.l2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML problem file")
    common.add_argument("--out", help="output directory (default: [output] dir or ./qpresponse_out)")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="qpresponse", description="Response solutions near degenerate equilibria.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one problem").set_defaults(func=cmd_solve)
    sp = sub.add_parser("sweep", parents=[common], help="epsilon sweep and scaling fit")
    sp.add_argument("--epsilons", help="comma-separated epsilon values (at least 3)")
    sp.set_defaults(func=cmd_sweep)
    mp = sub.add_parser("monodromy", parents=[common], help="continue a(eps) around eps = 0")
    mp.add_argument("--alpha", type=float)
    mp.add_argument("--loops", type=int)
    mp.add_argument("--steps", type=int, help=f"steps per loop (>= {MIN_MONODROMY_STEPS})")
    mp.set_defaults(func=cmd_monodromy)
    fp = sub.add_parser("check-frequency", parents=[common], help="realized Diophantine constants")
    fp.add_argument("--etas", help="comma-separated eta grid")
    fp.add_argument("--taus", help="comma-separated tau grid")
    fp.set_defaults(func=cmd_check_frequency)
    vp = sub.add_parser("verify", parents=[common], help="re-check a saved solve")
    vp.add_argument("--report", help="directory holding report.json and coefficients.csv")
    vp.set_defaults(func=cmd_verify)
    return parser


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _value):
        pass


def _setup_logging(quiet: bool) -> None:
    log.setLevel(logging.ERROR if quiet else logging.INFO)
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        log.addHandler(handler)
        log.propagate = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _setup_logging(args.quiet)
    try:
        return args.func(args)
    except SolverError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_MATH
    except (ConfigError, ValueError, QPResponseError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
