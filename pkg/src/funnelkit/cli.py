"""Command-line front end: parameter design, scenario simulation, built-in
demo scenarios, diagnostics.  JSON configs in, CSV/JSON out.

Exit codes: 0 success, 1 validation failure, 2 runtime abort, 64 usage.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, scenarios
from .errors import GuardViolation, IntegrationAbort
from .fcontrol import ControllerConfig
from .funnels import make_controller_funnel
from .paramdesign import design
from .plants import BifPlant, Example2Plant, linear_to_bif, make_reference
from .simloop import Scenario, run_closed_loop, run_open_loop

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64


class ScenarioError(ValueError):
    """Config rejection with a JSON-pointer-style path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.pointer = path


def _require(cond, path, message):
    if not cond:
        raise ScenarioError(path, message)


def _only_keys(obj: dict, allowed, path):
    unknown = sorted(set(obj) - set(allowed))
    _require(not unknown, path, f"unknown keys {unknown}")


def _number(obj, path):
    _require(isinstance(obj, (int, float)) and not isinstance(obj, bool),
             path, "expected a number")
    return float(obj)


def _matrix_arg(value, m, path):
    """A scalar c means c * I_m; otherwise a full m x m row list."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(m)
    arr = np.asarray(value, dtype=float)
    _require(arr.ndim == 2 and arr.shape == (m, m), path, f"expected {m}x{m} matrix")
    return arr


_FUNNEL_KEYS = {"family", "c_inf", "c_amp", "c_rate"}
_SIGNAL_KEYS = {"kind", "t0", "omega", "value"}


def _funnel_args(obj, path):
    _require(isinstance(obj, dict), path, "expected an object")
    _only_keys(obj, _FUNNEL_KEYS, path)
    _require("family" in obj and "c_inf" in obj, path, "needs family and c_inf")
    return obj


def _signal_list(obj, path, m=None):
    _require(isinstance(obj, list) and obj, path, "expected a nonempty list")
    for i, comp in enumerate(obj):
        _require(isinstance(comp, dict), f"{path}/{i}", "expected an object")
        _only_keys(comp, _SIGNAL_KEYS, f"{path}/{i}")
        _require("kind" in comp, f"{path}/{i}", "needs a kind")
    if m is not None:
        _require(len(obj) == m, path, f"expected {m} components, got {len(obj)}")
    try:
        return make_reference(obj)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _build_plant(obj, path):
    _require(isinstance(obj, dict), path, "expected an object")
    kind = obj.get("kind")
    _require(kind in ("example2", "bif", "linear"), f"{path}/kind",
             "expected one of example2, bif, linear")
    if kind == "example2":
        _only_keys(obj, {"kind"}, path)
        return Example2Plant()
    if kind == "linear":
        _only_keys(obj, {"kind", "A", "B", "C"}, path)
        for key in ("A", "B", "C"):
            _require(key in obj, f"{path}/{key}", "required for a linear plant")
        try:
            return linear_to_bif(np.asarray(obj["A"], dtype=float),
                                 np.asarray(obj["B"], dtype=float),
                                 np.asarray(obj["C"], dtype=float))
        except ValueError as exc:
            raise ScenarioError(path, str(exc)) from None
    _only_keys(obj, {"kind", "r", "m", "R", "S", "q_int", "p_int", "gamma"}, path)
    for key in ("r", "m", "R", "gamma"):
        _require(key in obj, f"{path}/{key}", "required for a normal-form plant")
    r = int(obj["r"])
    m = int(obj["m"])
    R = [np.asarray(Ri, dtype=float) for Ri in obj["R"]]
    _require(len(R) == r, f"{path}/R", f"expected {r} matrices")
    n_eta = 0
    S = np.zeros((m, 0))
    Q_int = np.zeros((0, 0))
    P_int = np.zeros((0, m))
    if "q_int" in obj:
        Q_int = np.asarray(obj["q_int"], dtype=float)
        n_eta = Q_int.shape[0]
        S = np.asarray(obj["S"], dtype=float) if "S" in obj else np.zeros((m, n_eta))
        P_int = np.asarray(obj["p_int"], dtype=float) if "p_int" in obj \
            else np.zeros((n_eta, m))
    try:
        return BifPlant(r=r, m=m, R=tuple(R), S=S, Q_int=Q_int, P_int=P_int,
                        Gamma=_matrix_arg(obj["gamma"], m, f"{path}/gamma"))
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


_TOP_KEYS = {"mode", "design", "plant", "signals", "reference", "tspan",
             "tolerances", "sample_step", "out_dir"}
_DESIGN_KEYS = {"r", "m", "s0", "a", "rho", "q", "gamma_tilde", "gamma",
                "funnel", "funnel_fc"}


def parse_scenario(path) -> Scenario:
    """Load, schema-check, and fully assemble a scenario file.

    The design pipeline runs here; a failing validation report aborts
    parsing (the report text is the error message).  Unknown keys anywhere
    are rejected.
    """
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from None

    _require(isinstance(doc, dict), "", "top level must be an object")
    _only_keys(doc, _TOP_KEYS, "")
    mode = doc.get("mode")
    _require(mode in ("open-loop", "closed-loop"), "/mode",
             "expected 'open-loop' or 'closed-loop'")

    dsn = doc.get("design")
    _require(isinstance(dsn, dict), "/design", "expected an object")
    _only_keys(dsn, _DESIGN_KEYS, "/design")
    for key in ("r", "m", "rho", "funnel"):
        _require(key in dsn, f"/design/{key}", "required")
    r = int(dsn["r"])
    m = int(dsn["m"])
    rho = _number(dsn["rho"], "/design/rho")
    _require(rho > 1.0, "/design/rho", "funnel scaling requires rho > 1")
    _require(("s0" in dsn) != ("a" in dsn), "/design",
             "exactly one of s0 or a must be given")

    tspan = doc.get("tspan", [0.0, 10.0])
    _require(isinstance(tspan, list) and len(tspan) == 2, "/tspan",
             "expected [t0, t1]")
    t0, t1 = _number(tspan[0], "/tspan/0"), _number(tspan[1], "/tspan/1")
    _require(t1 > t0, "/tspan", "t1 must exceed t0")

    tol = doc.get("tolerances", {"rel": 1e-6, "abs": 1e-8})
    _require(isinstance(tol, dict), "/tolerances", "expected an object")
    _only_keys(tol, {"rel", "abs"}, "/tolerances")
    rtol = _number(tol.get("rel", 1e-6), "/tolerances/rel")
    atol = _number(tol.get("abs", 1e-8), "/tolerances/abs")
    sample_step = _number(doc.get("sample_step", 0.01), "/sample_step")
    _require(sample_step > 0.0, "/sample_step", "must be positive")

    plant = None
    gamma = None
    if mode == "closed-loop":
        _require("plant" in doc, "/plant", "closed-loop mode needs a plant")
        _require("reference" in doc, "/reference", "closed-loop mode needs a reference")
        _require("signals" not in doc, "/signals", "not allowed in closed-loop mode")
        plant = _build_plant(doc["plant"], "/plant")
        _require(plant.m == m, "/plant", f"plant output dimension {plant.m} != design m {m}")
        _require(plant.r == r, "/plant", f"plant relative degree {plant.r} != design r {r}")
        gamma = plant.Gamma
    else:
        _require("signals" in doc, "/signals", "open-loop mode needs a signal pair")
        for key in ("plant", "reference"):
            _require(key not in doc, f"/{key}", "not allowed in open-loop mode")
        sig = doc["signals"]
        _require(isinstance(sig, dict), "/signals", "expected an object")
        _only_keys(sig, {"y", "u"}, "/signals")
        _require("y" in sig and "u" in sig, "/signals", "needs y and u")

    if "gamma" in dsn:
        gamma = _matrix_arg(dsn["gamma"], m, "/design/gamma")

    funnel = dict(_funnel_args(dsn["funnel"], "/design/funnel"))
    q = None
    if "q" in dsn:
        q = np.asarray(dsn["q"], dtype=float)
    gamma_tilde = _matrix_arg(dsn.get("gamma_tilde", 1.0), m, "/design/gamma_tilde")

    try:
        params, report = design(
            r=r, m=m, s0=float(dsn.get("s0", 0.0)) if "s0" in dsn else 1.0,
            rho=rho, Gamma_tilde=gamma_tilde, phi_params=funnel, Q=q, Gamma=gamma,
            a=np.asarray(dsn["a"], dtype=float) if "a" in dsn else None)
    except ValueError as exc:
        raise ScenarioError("/design", str(exc)) from None
    if not report.ok:
        raise ScenarioError("/design", "design validation failed:\n" + report.render_text())

    controller = None
    reference = None
    y_signal = u_signal = None
    if mode == "closed-loop":
        reference = _signal_list(doc["reference"], "/reference", m)
        fc = dsn.get("funnel_fc", {"family": "exp-boundary", "c_inf": 0.05,
                                   "c_amp": 2.0, "c_rate": 1.0})
        fc = dict(_funnel_args(fc, "/design/funnel_fc"))
        try:
            phi_fc = make_controller_funnel(horizon=t1, **fc)
        except (TypeError, ValueError) as exc:
            raise ScenarioError("/design/funnel_fc", str(exc)) from None
        controller = ControllerConfig(r=r, m=m, phi_fc=phi_fc)
    else:
        y_signal = _signal_list(doc["signals"]["y"], "/signals/y", m)
        u_signal = _signal_list(doc["signals"]["u"], "/signals/u", m)

    return Scenario(mode=mode, params=params, tspan=(t0, t1), rtol=rtol, atol=atol,
                    sample_step=sample_step, y_signal=y_signal, u_signal=u_signal,
                    plant=plant, reference=reference, controller=controller,
                    gamma=gamma, report=report, label=path.stem)


# ---------------------------------------------------------------------------
# commands


def _run_scenario(scenario: Scenario):
    if scenario.mode == "open-loop":
        return run_open_loop(scenario)
    return run_closed_loop(scenario)


def _write_outputs(result, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    result.to_csv(out_dir / "result.csv")
    with open(out_dir / "report.json", "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_design(args) -> int:
    m = args.m
    gamma_tilde = _parse_matrix_flag(args.gamma_tilde, m) if args.gamma_tilde else None
    gamma = _parse_matrix_flag(args.gamma, m) if args.gamma else None
    q = None
    if args.q:
        q = np.asarray(json.loads(args.q), dtype=float)
    try:
        params, report = design(r=args.r, m=m, s0=args.s0, rho=args.rho,
                                Gamma_tilde=gamma_tilde, Q=q, Gamma=gamma)
    except ValueError as exc:
        print(f"design failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        payload = {
            "r": params.r, "m": params.m, "s0": args.s0, "rho": params.rho,
            "a": params.a.tolist(), "p": params.p.tolist(),
            "p_tilde": params.p_tilde,
            "A": params.A.tolist(), "P": params.P.tolist(), "Q": params.Q.tolist(),
            "gamma_tilde": params.Gamma_tilde.tolist(),
            "report": report.as_dict(),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        with np.printoptions(precision=6, suppress=True):
            print(f"r = {params.r}, m = {params.m}, s0 = {args.s0:g}, rho = {params.rho:g}")
            print(f"a = {np.array2string(params.a, separator=', ')}")
            print(f"p = {np.array2string(params.p, separator=', ')}")
            print(f"p_tilde = {params.p_tilde:.6g}")
            print("P =")
            print(np.array2string(params.P))
            print(report.render_text())
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _parse_matrix_flag(text: str, m: int):
    try:
        return _matrix_arg(json.loads(text), m, "<flag>")
    except (json.JSONDecodeError, ScenarioError):
        raise ValueError(f"could not parse matrix flag {text!r}") from None


def _cmd_simulate(args) -> int:
    out_root = Path(args.out)
    configs = [Path(c) for c in args.config]

    def one(config_path: Path):
        scenario = parse_scenario(config_path)
        result = _run_scenario(scenario)
        dest = out_root if len(configs) == 1 else out_root / config_path.stem
        _write_outputs(result, dest)
        return dest

    try:
        if len(configs) > 1 and args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                dests = list(pool.map(one, configs))
        else:
            dests = [one(c) for c in configs]
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationAbort, GuardViolation) as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for dest in dests:
        print(f"wrote {dest / 'result.csv'}")
    return EXIT_OK


def _cmd_example(args) -> int:
    if args.name == "precompensator":
        scenario = scenarios.precompensator_demo(s0=args.s0 if args.s0 else 5.0)
    else:
        scenario = scenarios.tracking_demo(s0=args.s0 if args.s0 else 7.0)
    try:
        result = _run_scenario(scenario)
    except (IntegrationAbort, GuardViolation) as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_outputs(result, Path(args.out))
    print(f"wrote {Path(args.out) / 'result.csv'}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    try:
        scenario = parse_scenario(args.config)
        result = _run_scenario(scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationAbort, GuardViolation) as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out_dir = Path(args.out)
    _write_outputs(result, out_dir)
    identities = diagnostics.kron_identities(scenario.params, scenario.gamma)
    plant_R = getattr(scenario.plant, "R", None)
    coords = diagnostics.error_coordinates(result, scenario.params,
                                           Gamma=scenario.gamma, R=plant_R)
    margins = diagnostics.margin_report(coords, scenario.params)
    payload = {"kronecker_identities": identities, "margins": margins}
    with open(out_dir / "diagnostics.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_stages = coords.margin_series.shape[1]
    header = ["t"] + [f"margin_x_{i}" for i in range(1, n_stages + 1)]
    if coords.V is not None:
        header.append("V")
    with open(out_dir / "diagnostics.csv", "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(coords.t.size):
            vals = [coords.t[row], *coords.margin_series[row]]
            if coords.V is not None:
                vals.append(coords.V[row])
            fh.write(",".join(format(v, ".17g") for v in vals) + "\n")
    print(f"wrote {out_dir / 'diagnostics.json'}")
    return EXIT_OK


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="funnelkit",
                     description="funnel pre-compensator design and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="derive and validate design parameters")
    p_design.add_argument("--r", type=int, required=True)
    p_design.add_argument("--s0", type=float, required=True)
    p_design.add_argument("--m", type=int, default=1)
    p_design.add_argument("--rho", type=float, default=1.5)
    p_design.add_argument("--gamma-tilde", dest="gamma_tilde",
                          help="scalar (c*I) or JSON matrix")
    p_design.add_argument("--gamma", help="true high-gain matrix, scalar or JSON")
    p_design.add_argument("--q", help="JSON matrix for the Lyapunov right-hand side")
    p_design.add_argument("--json", action="store_true", help="machine-readable output")

    p_sim = sub.add_parser("simulate", help="run scenario config files")
    p_sim.add_argument("--config", nargs="+", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--jobs", type=int, default=1)

    p_ex = sub.add_parser("example", help="run a built-in demo scenario")
    p_ex.add_argument("name", choices=["precompensator", "tracking"])
    p_ex.add_argument("--s0", type=float, default=None)
    p_ex.add_argument("--out", required=True)

    p_diag = sub.add_parser("diagnose", help="simulate plus run diagnostics")
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--out", required=True)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "design":
            return _cmd_design(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "example":
            return _cmd_example(args)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    raise AssertionError("unreachable subcommand")


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
