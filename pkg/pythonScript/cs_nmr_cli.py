"""
Command-line interface for CS-NMR state reconstruction
Subcommands: state, measure, reconstruct, sweep, compare, report
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from cs_nmr_errors import CSNMRError
from cs_nmr_system import CSNMRReconstructionSystem, SOLVERS
from monte_carlo_harness import (DEFAULT_THRESHOLD, DEFAULT_TRIALS, ReconstructionCase, SweepConfig,
                                 compare_methods, echo_lines, read_records_csv, run_sweep, score_estimate,
                                 summarize, write_comparison_json, write_errorbar_csv, write_records_csv,
                                 write_summary_csv, write_sweep_json)
from nmr_simulator import (MeasurementPath, NoiseMode, NoiseSpec, SpectrumModel, build_scheme,
                           read_measurements, read_scheme, write_measurements, write_scheme)
from quantum_core import (PRESET_STATES, outer_product, preset_state, random_pure_state,
                          read_density_matrix, write_density_matrix, write_state)
from sensing import SamplingMode, read_problem, write_problem
from solvers import Estimate, PostProcess, SolverConfig, write_result

logger = logging.getLogger(__name__)

PROG = "cs-nmr"
SEED_ENV = "CS_NMR_SEED"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SUBCOMMANDS = ("state", "measure", "reconstruct", "sweep", "compare", "report")


class UsageError(Exception):
    """Invalid combination of options detected after parsing"""


@dataclass
class CommandSpec:
    subcommand: str
    options: Dict[str, Any] = field(default_factory=dict)
    config_path: Optional[str] = None


# parser

def _seed_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=None,
                        help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    return parent


def _noise_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--noise", choices=[m.value for m in NoiseMode], default=NoiseMode.NONE.value)
    parent.add_argument("--sigma", type=float, default=0.0, help="noise standard deviation")
    return parent


def _spectral_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--path", choices=[p.value for p in MeasurementPath], default=MeasurementPath.IDEAL.value)
    parent.add_argument("--t2", type=float, default=1.0, help="transverse relaxation time")
    parent.add_argument("--m0", type=float, default=1.0, help="magnetization scale")
    parent.add_argument("--p0", type=float, default=1.0, help="peak-area calibration factor")
    parent.add_argument("--delta-omega", type=float, default=64.0, help="integration half-width (rad/s)")
    parent.add_argument("--peak-spacing", type=float, default=None, help="peak separation (rad/s)")
    return parent


def _solver_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--delta", type=float, default=1.0, help="FP-ADMM step size")
    parent.add_argument("--lam", type=float, default=1.0, help="sparsity weight (0 or less selects 1/sqrt(d))")
    parent.add_argument("--mu-scale", type=float, default=2.0, help="mu = mu_scale / ||y||")
    parent.add_argument("--epsilon1", type=float, default=1e-7, help="relative residual stop")
    parent.add_argument("--k-max", type=int, default=30, help="iteration cap")
    parent.add_argument("--post-process", choices=[p.value for p in PostProcess],
                        default=PostProcess.TRACE_NORMALIZE.value)
    parent.add_argument("--estimate", choices=[e.value for e in Estimate], default=Estimate.RHO.value)
    parent.add_argument("--y-sign", type=int, choices=[1, -1], default=1)
    parent.add_argument("--no-orthonormalize", action="store_true", help="iterate on the raw sampling rows")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Compressive-sensing NMR state reconstruction")
    parser.add_argument("--config", default=None, help="key=value file; command-line flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    seed, noise, spectral, solver = _seed_parent(), _noise_parent(), _spectral_parent(), _solver_parent()

    state = commands.add_parser("state", parents=[seed], help="write a target state file")
    state.add_argument("--preset", choices=PRESET_STATES, default=None)
    state.add_argument("--random", action="store_true", help="Haar-random pure state")
    state.add_argument("--n", type=int, default=None, help="qubits for --random")
    state.add_argument("--density", action="store_true", help="write the density matrix")
    state.add_argument("--out", required=True)

    measure = commands.add_parser("measure", parents=[seed, noise, spectral], help="simulate group readouts")
    measure.add_argument("--state", required=True, help="state or density matrix file")
    measure.add_argument("--scheme", default=None, help="scheme file (default scheme when omitted)")
    measure.add_argument("--v", type=int, default=None, help="group count of the default scheme")
    measure.add_argument("--scheme-seed", type=int, default=1)
    measure.add_argument("--scheme-out", default=None, help="also write the scheme used")
    measure.add_argument("--out", required=True)

    reconstruct = commands.add_parser("reconstruct", parents=[seed, noise, spectral, solver],
                                      help="estimate a state from a problem or a state+scheme")
    reconstruct.add_argument("--problem", default=None, help="problem dump to solve")
    reconstruct.add_argument("--state", default=None, help="state file to simulate and score against")
    reconstruct.add_argument("--scheme", default=None)
    reconstruct.add_argument("--scheme-seed", type=int, default=1)
    reconstruct.add_argument("--measurements", default=None, help="measurement dump instead of simulating")
    reconstruct.add_argument("--mode", choices=[m.value for m in SamplingMode], default=SamplingMode.GROUPS.value)
    reconstruct.add_argument("--eta", type=float, default=1.0, help="sampling rate")
    reconstruct.add_argument("--solver", choices=SOLVERS, default="fpadmm")
    reconstruct.add_argument("--problem-out", default=None, help="also write the assembled problem")
    reconstruct.add_argument("--record-timing", action="store_true", help="include wall time in the output")
    reconstruct.add_argument("--out", required=True)

    sweep = commands.add_parser("sweep", parents=[seed, noise, spectral, solver], help="Monte Carlo rate sweep")
    sweep.add_argument("--case", choices=[c.value for c in ReconstructionCase], required=True)
    sweep.add_argument("--n", type=int, required=True)
    sweep.add_argument("--state", default=None, help="preset name or 'random'")
    sweep.add_argument("--eta", default=None, help="comma-separated sampling rates")
    sweep.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    sweep.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sweep.add_argument("--scheme-seed", type=int, default=1)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out-dir", default=".")

    compare = commands.add_parser("compare", parents=[seed, noise, spectral, solver],
                                  help="full-data QST against the compressive pipeline")
    compare.add_argument("--n", type=int, required=True)
    compare.add_argument("--state", default=None)
    compare.add_argument("--eta", type=float, default=None, help="group sampling rate")
    compare.add_argument("--scheme-seed", type=int, default=1)
    compare.add_argument("--out", required=True)

    report = commands.add_parser("report", help="re-aggregate a records CSV")
    report.add_argument("--records", required=True)
    report.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    report.add_argument("--errorbar", default=None, help="also write f_avg +/- zeta")
    report.add_argument("--out", required=True)
    return parser


def read_config(path: str) -> Dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{number}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, command: str, values: Dict[str, str]):
    commands = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = commands.choices[command]
    actions = {action.dest: action for action in subparser._actions if action.dest != "help"}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            parser.error(f"unknown configuration key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            converted = value.lower() in ("1", "true", "yes", "on")
        else:
            converted = action.type(value) if action.type else value
            if action.choices is not None and converted not in action.choices:
                parser.error(f"configuration value {value!r} invalid for {key}")
        defaults[key] = converted
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    subparser.set_defaults(**defaults)


def parse_args(argv: Optional[Sequence[str]] = None) -> CommandSpec:
    """Parse arguments; usage errors exit with status 2"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    config_path = _peek_config(argv)
    if config_path is not None:
        command = next((a for a in argv if a in SUBCOMMANDS), None)
        if command is None:
            parser.parse_args(argv)
        try:
            values = read_config(config_path)
        except UsageError as error:
            parser.error(str(error))
        _apply_config(parser, command, values)
    args = parser.parse_args(argv)
    options = vars(args)
    subcommand = options.pop("command")
    config_path = options.pop("config")
    return CommandSpec(subcommand=subcommand, options=options, config_path=config_path)


def _peek_config(argv: List[str]) -> Optional[str]:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


# helpers

def _seed(options: Dict[str, Any]) -> int:
    if options.get("seed") is not None:
        return options["seed"]
    return int(os.environ.get(SEED_ENV, "0"))


def _noise(options: Dict[str, Any], seed: int) -> NoiseSpec:
    return NoiseSpec(mode=NoiseMode(options.get("noise", "none")), sigma=options.get("sigma", 0.0), seed=seed)


def _spectral(options: Dict[str, Any]) -> SpectrumModel:
    return SpectrumModel(t2=options["t2"], m0=options["m0"], p0=options["p0"],
                         delta_omega=options["delta_omega"], min_separation=options.get("peak_spacing"))


def _solver_config(options: Dict[str, Any]) -> SolverConfig:
    lam = options["lam"]
    return SolverConfig(delta=options["delta"], lam=lam if lam is not None and lam > 0 else None,
                        mu_scale=options["mu_scale"], epsilon1=options["epsilon1"], k_max=options["k_max"],
                        post_process=PostProcess(options["post_process"]), y_sign=options["y_sign"],
                        estimate=Estimate(options["estimate"]), orthonormalize=not options["no_orthonormalize"])


def _header(spec: CommandSpec) -> List[str]:
    lines = [f"{PROG} {spec.subcommand}"]
    lines += [f"{key}={value}" for key, value in sorted(spec.options.items())
              if value is not None and key not in ("verbose", "record_timing")]
    return lines


def _status(message: str):
    print(message, file=sys.stderr)


# subcommands

def _run_state(spec: CommandSpec) -> int:
    options = spec.options
    if (options["preset"] is None) == (not options["random"]):
        raise UsageError("choose exactly one of --preset or --random")
    if options["preset"] is not None:
        psi = preset_state(options["preset"])
    else:
        if options["n"] is None:
            raise UsageError("--random needs --n")
        psi = random_pure_state(options["n"], _seed(options))
    if options["density"]:
        write_density_matrix(options["out"], outer_product(psi), _header(spec))
    else:
        write_state(options["out"], psi, _header(spec))
    _status(f"✓ wrote {psi.n}-qubit state to {options['out']}")
    return EXIT_OK


def _system(options: Dict[str, Any], rho) -> CSNMRReconstructionSystem:
    scheme = None
    if options.get("scheme"):
        scheme = read_scheme(options["scheme"])
    elif options.get("v") is not None:
        scheme = build_scheme(rho.n, v=options["v"], seed=options["scheme_seed"])
    system = CSNMRReconstructionSystem(rho.n, scheme=scheme, scheme_seed=options.get("scheme_seed", 1),
                                       spectral_params=_spectral(options))
    system.prepare_state(rho=rho)
    return system


def _run_measure(spec: CommandSpec) -> int:
    options = spec.options
    rho = read_density_matrix(options["state"])
    system = _system(options, rho)
    record = system.acquire(options["path"], _noise(options, _seed(options)))
    write_measurements(options["out"], record, _header(spec))
    if options["scheme_out"]:
        write_scheme(options["scheme_out"], system.scheme, _header(spec))
    _status(f"✓ measured {system.scheme.v} groups ({record.path.value} path) -> {options['out']}")
    return EXIT_OK


def _run_reconstruct(spec: CommandSpec) -> int:
    options = spec.options
    seed = _seed(options)
    truth = None
    if options["problem"]:
        problem = read_problem(options["problem"])
        scheme = read_scheme(options["scheme"]) if options["scheme"] else None
        system = CSNMRReconstructionSystem(problem.n, scheme=scheme, scheme_seed=options["scheme_seed"],
                                           solver_config=_solver_config(options))
        if options["state"]:
            truth = read_density_matrix(options["state"])
    elif options["state"]:
        truth = read_density_matrix(options["state"])
        system = _system(options, truth)
        system.solver_config = _solver_config(options)
        noise = _noise(options, seed)
        if options["measurements"]:
            system.record = read_measurements(options["measurements"])
        elif SamplingMode(options["mode"]) is SamplingMode.GROUPS:
            system.acquire(options["path"], noise)
        problem = system.sample(options["eta"], seed, options["mode"], noise)
    else:
        raise UsageError("reconstruct needs --problem or --state")

    result = system.reconstruct(options["solver"], problem)
    header = _header(spec)
    if options["problem_out"]:
        write_problem(options["problem_out"], problem, header)
    if truth is not None:
        score, score_flags = score_estimate(result, truth)
        header.append(f"fidelity {score:.17g}")
        extra = sorted(set(score_flags) - set(result.flags))
        if extra:
            header.append(f"score_flags {','.join(extra)}")
        print(f"fidelity {score:.6f}")
    write_result(options["out"], result, header, include_timing=options["record_timing"])
    _status(f"✓ {result.method} estimate ({result.iterations} iterations, converged={result.converged}) "
            f"-> {options['out']}")
    return EXIT_OK


def _parse_etas(text: Optional[str]):
    if text is None:
        return None
    try:
        return tuple(float(token) for token in text.split(",") if token.strip())
    except ValueError:
        raise UsageError(f"invalid sampling rate list {text!r}") from None


def _run_sweep(spec: CommandSpec) -> int:
    options = spec.options
    seed = _seed(options)
    config = SweepConfig(case=ReconstructionCase(options["case"]), n=options["n"], state=options["state"],
                         eta_values=_parse_etas(options["eta"]), trials=options["trials"],
                         noise=_noise(options, seed), measurement_path=MeasurementPath(options["path"]),
                         base_seed=seed, scheme_seed=options["scheme_seed"], threshold=options["threshold"],
                         jobs=options["jobs"], solver_config=_solver_config(options),
                         spectral_params=_spectral(options))
    result = run_sweep(config)
    out_dir = Path(options["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"sweep_{config.case.value}_n{config.n}"
    header = _header(spec) + echo_lines(config.echo())
    write_records_csv(f"{stem}_records.csv", result.records, header)
    write_summary_csv(f"{stem}_summary.csv", result.summary, header)
    write_errorbar_csv(f"{stem}_errorbars.csv", result.summary, header)
    write_sweep_json(f"{stem}.json", result)
    for row in result.summary:
        print(f"{row.eta:.6g} {row.f_avg:.6g} {row.zeta:.6g} {row.success_prob:.6g}")
    _status(f"✓ {len(result.records)} trials written under {out_dir}")
    return EXIT_OK


def _run_compare(spec: CommandSpec) -> int:
    options = spec.options
    seed = _seed(options)
    comparison = compare_methods(options["n"], options["state"], options["eta"], _noise(options, seed), seed,
                                 options["scheme_seed"], _solver_config(options),
                                 MeasurementPath(options["path"]), _spectral(options))
    echo = {line.split("=", 1)[0]: line.split("=", 1)[1] for line in _header(spec)[1:]}
    write_comparison_json(options["out"], comparison, echo)
    print(f"qst {comparison.qst_fidelity:.6f} proposed {comparison.proposed_fidelity:.6f} "
          f"(eta_g={comparison.eta_g:.4g}, {comparison.g}/{comparison.v} groups)")
    return EXIT_OK


def _run_report(spec: CommandSpec) -> int:
    options = spec.options
    records = read_records_csv(options["records"])
    summary = summarize(records, options["threshold"])
    header = _header(spec)
    write_summary_csv(options["out"], summary, header)
    if options["errorbar"]:
        write_errorbar_csv(options["errorbar"], summary, header)
    _status(f"✓ summarized {len(records)} records into {len(summary)} rows -> {options['out']}")
    return EXIT_OK


HANDLERS: Dict[str, Callable[[CommandSpec], int]] = {
    "state": _run_state,
    "measure": _run_measure,
    "reconstruct": _run_reconstruct,
    "sweep": _run_sweep,
    "compare": _run_compare,
    "report": _run_report,
}


def execute(spec: CommandSpec) -> int:
    """Run a parsed command; 0 success, 1 runtime error, 2 usage error"""
    try:
        return HANDLERS[spec.subcommand](spec)
    except UsageError as error:
        _status(f"✗ usage: {error}")
        return EXIT_USAGE
    except FileNotFoundError as error:
        _status(f"✗ file not found: {error.filename}")
        return EXIT_RUNTIME
    except (CSNMRError, OSError, ValueError) as error:
        _status(f"✗ {spec.subcommand} failed: {error}")
        return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as exit_request:
        return exit_request.code if isinstance(exit_request.code, int) else EXIT_USAGE
    except FileNotFoundError as error:
        _status(f"✗ file not found: {error.filename}")
        return EXIT_RUNTIME
    logging.basicConfig(level=logging.DEBUG if spec.options.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return execute(spec)


if __name__ == "__main__":
    sys.exit(main())
