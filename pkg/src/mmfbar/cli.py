"""``mmfbar`` command line.

Every subcommand writes its data files plus a ``manifest.json`` into the
output directory (``--out-dir``, else ``$MMFBAR_OUTPUT_DIR``, else
``./mmfbar-out``).  Exit codes: 0 success, 1 invalid input or usage,
2 a failed computation (for example a fit that cannot find a resonance).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, survey
from .extraction import (
    TOPOLOGIES,
    FitError,
    TwoPortData,
    add_noise,
    auto_fit_config,
    bode_q,
    device_admittance,
    fit_mbvd,
    s_to_y,
    y_from_s11,
    y_to_s11,
)
from .io.config import fit_config_to_dict
from .io import (
    ConfigError,
    OptionLine,
    TouchstoneDocument,
    TouchstoneError,
    bode_to_csv,
    dumps_mbvd_params,
    load_fit_config,
    load_mbvd_params,
    load_stack_config,
    modes_to_json,
    parse_touchstone,
    spectrum_from_csv,
    spectrum_to_csv,
    sweep_to_csv,
    write_touchstone,
)
from .materials import loads_material_table
from .mbvd import derived_metrics, mbvd_admittance, params_from_targets
from .spectrum import ComplexSpectrum, FrequencyGrid, spectrum_modes
from .stacksim import simulate_modes, stack_admittance, sweep

ENV_OUT_DIR = "MMFBAR_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Run:
    """Collects inputs and outputs of one invocation for the manifest."""

    def __init__(self, command: str, out_dir: Path):
        self.command = command
        self.out_dir = out_dir
        self.inputs: list[dict] = []
        self.outputs: list[dict] = []
        self.settings: dict = {}

    def read(self, path: str, role: str) -> str:
        p = Path(path)
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise ConfigError(f"{role}: cannot read {path}: {exc.strerror}") from None
        self.inputs.append({"role": role, "path": str(p.resolve()), "sha256": hashlib.sha256(data).hexdigest()})
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise ConfigError(f"{role}: {path} is not UTF-8 text") from None

    def packaged(self, name: str, role: str) -> str:
        data = resources.files("mmfbar.data").joinpath(name).read_bytes()
        self.inputs.append({"role": role, "path": f"mmfbar.data/{name}", "sha256": hashlib.sha256(data).hexdigest()})
        return data.decode("utf-8")

    def write(self, name: str, text: str) -> None:
        if Path(name).name != name or name in ("", ".", ".."):
            raise ConfigError(f"output name {name!r} must be a plain file name")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        (self.out_dir / name).write_bytes(data)
        self.outputs.append({"file": name, "sha256": hashlib.sha256(data).hexdigest()})

    def finish(self) -> None:
        manifest = {
            "tool": "mmfbar",
            "version": __version__,
            "subcommand": self.command,
            "settings": self.settings,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        self.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- shared helpers ----------------------------------------------------------


def _materials(run: Run, args):
    if args.materials:
        try:
            return loads_material_table(run.read(args.materials, "materials"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"materials: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return loads_material_table(run.packaged("materials.json", "materials"))


def _stack(run: Run, args):
    table = _materials(run, args)
    if args.stack:
        text = run.read(args.stack, "stack")
    else:
        text = run.packaged("default_stack.json", "stack")
    return load_stack_config(text, table)


def _grid(args, default=None) -> FrequencyGrid:
    start, stop, points = default or (None, None, None)
    start = args.start if args.start is not None else start
    stop = args.stop if args.stop is not None else stop
    points = args.points if args.points is not None else points
    if None in (start, stop, points):
        raise ConfigError("frequency grid needs --from, --to and --points")
    return FrequencyGrid(start, stop, points, args.spacing)


def _add_grid(p, required=True):
    p.add_argument("--from", dest="start", type=float, required=required, help="first frequency, Hz")
    p.add_argument("--to", dest="stop", type=float, required=required, help="last frequency, Hz")
    p.add_argument("--points", type=int, required=required)
    p.add_argument("--spacing", choices=("linear", "logarithmic"), default="linear")


def _load_spectrum(run: Run, path: str, args) -> ComplexSpectrum:
    """Device admittance from a .s1p/.s2p file or a spectrum CSV."""
    text = run.read(path, "data")
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        y = spectrum_from_csv(text)
        if y.quantity == "reflection":
            return y_from_s11(y, args.z0)
        return y.to_admittance()
    ports = {".s1p": 1, ".s2p": 2}.get(suffix)
    doc = parse_touchstone(text, ports)
    if doc.ports == 1:
        return y_from_s11(ComplexSpectrum(doc.frequencies, doc.s[:, 0, 0], "reflection"), doc.options.z0)
    y2p = s_to_y(TwoPortData(doc.frequencies, doc.s, doc.options.z0))
    y = device_admittance(y2p, args.topology)
    ok = np.isfinite(y.values)
    if not np.all(ok):
        y = ComplexSpectrum(y.frequencies[ok], y.values[ok], "admittance")
    return y


def _j(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- subcommands -------------------------------------------------------------


def cmd_simulate(run: Run, args) -> None:
    s = _stack(run, args)
    g = _grid(args)
    run.settings.update(grid=[g.start, g.stop, g.points, g.spacing], prominence_db=args.prominence_db)
    y = stack_admittance(s, g)
    modes = simulate_modes(s, g, args.prominence_db, spectrum=y)
    run.write("admittance.csv", spectrum_to_csv(y))
    run.write("modes.json", modes_to_json(modes))
    for m in modes:
        print(f"{m.label}: f_s={m.f_s / 1e9:.4f} GHz f_p={m.f_p / 1e9:.4f} GHz k2={100 * m.k2:.2f}% Q_p={m.q_p:.1f}")


def cmd_modes(run: Run, args) -> None:
    y = _load_spectrum(run, args.input, args)
    run.settings.update(prominence_db=args.prominence_db, topology=args.topology)
    modes = spectrum_modes(y, args.prominence_db)
    run.write("modes.json", modes_to_json(modes))
    for m in modes:
        print(f"{m.label}: f_s={m.f_s / 1e9:.4f} GHz f_p={m.f_p / 1e9:.4f} GHz k2={100 * m.k2:.2f}% Q_p={m.q_p:.1f}")


def cmd_fit(run: Run, args) -> None:
    y = _load_spectrum(run, args.input, args)
    if args.config:
        cfg = load_fit_config(run.read(args.config, "fit-config"))
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    else:
        cfg = auto_fit_config(y, seed=args.seed or 0)
    run.settings.update(topology=args.topology, fit=fit_config_to_dict(cfg))
    result = fit_mbvd(y, cfg)
    run.write("mbvd.json", dumps_mbvd_params(result.params))
    run.write("fit_report.json", _j(result.report()))
    for d in result.diagnostics:
        print(f"warning: {d}", file=sys.stderr)
    for m in result.metrics:
        print(f"{m.label}: f_s={m.f_s / 1e9:.4f} GHz k2={100 * m.k2:.2f}% Q_p={m.q_p:.1f} FoM={survey.display(m.fom)}")


def cmd_bodeq(run: Run, args) -> None:
    if bool(args.input) == bool(args.model):
        raise ConfigError("give exactly one of --input or --model")
    if args.input:
        y = _load_spectrum(run, args.input, args)
    else:
        p = load_mbvd_params(run.read(args.model, "model"))
        y = mbvd_admittance(p, _grid(args))
    run.settings.update(z0=args.z0, smooth_window=args.smooth_window, topology=args.topology)
    b = bode_q(y_to_s11(y, args.z0), args.smooth_window)
    run.write("bodeq.csv", bode_to_csv(b))


def cmd_synth(run: Run, args) -> None:
    n = len(args.fs)
    if not (len(args.k2) == len(args.q) == n):
        raise ConfigError("--fs, --k2 and --q must be given the same number of times")
    targets = list(zip(args.fs, args.k2, args.q))
    p = params_from_targets(targets, args.c0, args.rs, args.ls, args.r0)
    lo, hi = min(args.fs), max(args.fs)
    g = _grid(args, default=(0.25 * lo, 1.5 * hi, 4001))
    run.settings.update(
        targets=[list(t) for t in sorted(targets)],
        grid=[g.start, g.stop, g.points, g.spacing],
        z0=args.z0,
        noise_db=args.noise_db,
        seed=args.seed or 0,
    )
    y = mbvd_admittance(p, g)
    if args.noise_db is not None:
        y = add_noise(y, args.noise_db, args.seed or 0)
    s11 = y_to_s11(y, args.z0)
    doc = TouchstoneDocument(
        1,
        s11.frequencies,
        s11.values.reshape(-1, 1, 1),
        OptionLine("GHz", "S", "RI", args.z0),
        (" synthetic mBVD response",),
    )
    run.write("mbvd.json", dumps_mbvd_params(p))
    run.write("synth.s1p", write_touchstone(doc))
    for m in derived_metrics(p):
        print(f"{m.label}: f_s={m.f_s / 1e9:.4f} GHz f_p={m.f_p / 1e9:.4f} GHz k2={100 * m.k2:.2f}% Q_p={m.q_p:.1f}")


def _values(args) -> list[float]:
    if args.values:
        try:
            return [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("--values must be a comma-separated list of numbers") from None
    if None in (args.vstart, args.vstop, args.steps):
        raise ConfigError("give --values or all of --start, --stop, --steps")
    return np.linspace(args.vstart, args.vstop, args.steps).tolist()


def cmd_sweep(run: Run, args) -> None:
    s = _stack(run, args)
    g = _grid(args)
    values = _values(args)
    run.settings.update(parameter=args.parameter, values=values, grid=[g.start, g.stop, g.points, g.spacing])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = sweep(s, args.parameter, values, g, args.prominence_db)
    run.write("sweep.csv", sweep_to_csv(rows))


def cmd_convert(run: Run, args) -> None:
    text = run.read(args.input, "data")
    src = Path(args.input).suffix.lower()
    dst = Path(args.output).suffix.lower()
    run.settings.update(output=args.output)
    if src in (".s1p", ".s2p") and dst == ".csv":
        doc = parse_touchstone(text, {".s1p": 1, ".s2p": 2}[src])
        if doc.ports == 1:
            out = spectrum_to_csv(ComplexSpectrum(doc.frequencies, doc.s[:, 0, 0], "reflection"))
        else:
            y = device_admittance(s_to_y(TwoPortData(doc.frequencies, doc.s, doc.options.z0)), args.topology)
            out = spectrum_to_csv(y)
    elif src == ".csv" and dst == ".s1p":
        y = spectrum_from_csv(text)
        s11 = y if y.quantity == "reflection" else y_to_s11(y.to_admittance(), args.z0)
        doc = TouchstoneDocument(1, s11.frequencies, s11.values.reshape(-1, 1, 1), OptionLine("GHz", "S", "RI", args.z0))
        out = write_touchstone(doc)
    elif src in (".s1p", ".s2p") and dst in (".s1p", ".s2p"):
        doc = parse_touchstone(text, {".s1p": 1, ".s2p": 2}[src])
        if dst != src:
            raise ConfigError("port count cannot change between Touchstone files")
        out = write_touchstone(doc)
    else:
        raise ConfigError(f"cannot convert {src or 'unknown'} to {dst or 'unknown'}")
    run.write(args.output, out)


def cmd_survey(run: Run, args) -> None:
    entries = survey.this_work()
    if args.input:
        entries += survey.loads_csv(run.read(args.input, "survey"))
    table = survey.rank(entries, args.min_frequency)
    run.settings.update(min_frequency=args.min_frequency)
    run.write("survey.csv", survey.dumps_csv(table))
    run.write("survey.json", survey.dumps_json(table))
    for e in table:
        print(f"{e.label}\t{e.frequency / 1e9:.2f} GHz\tk2={100 * e.k2:.2f}%\tQ={e.q:g}\tFoM={survey.display(e.fom)}")


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default ${ENV_OUT_DIR} or ./mmfbar-out)")
    common.add_argument("--materials", help="material table JSON replacing the shipped one")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--topology", choices=TOPOLOGIES, default="series-thru", help="two-port fixture")
    common.add_argument("--z0", type=float, default=50.0, help="reference impedance, ohm")
    common.add_argument("--smooth-window", type=int, default=11)

    p = _Parser(prog="mmfbar", description="mmWave FBAR simulation, mBVD extraction and Bode Q.")
    p.add_argument("--version", action="version", version=f"mmfbar {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("simulate", parents=[common], help="stack -> admittance CSV and modes")
    s.add_argument("--stack", help="stack JSON (default: shipped Al/ScAlN/Al stack)")
    _add_grid(s)
    s.add_argument("--prominence-db", type=float, default=3.0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("modes", parents=[common], help="spectrum -> mode metrics JSON")
    s.add_argument("--input", required=True, help=".s1p, .s2p or spectrum CSV")
    s.add_argument("--prominence-db", type=float, default=3.0)
    s.set_defaults(func=cmd_modes)

    s = sub.add_parser("fit", parents=[common], help="Touchstone -> mBVD parameters")
    s.add_argument("--input", required=True)
    s.add_argument("--config", help="fit configuration JSON (default: windows found automatically)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("bodeq", parents=[common], help="Bode Q from data or a model")
    s.add_argument("--input")
    s.add_argument("--model", help="mBVD JSON")
    _add_grid(s, required=False)
    s.set_defaults(func=cmd_bodeq)

    s = sub.add_parser("synth", parents=[common], help="targets -> mBVD and synthetic .s1p")
    s.add_argument("--fs", type=float, action="append", required=True, help="series resonance, Hz (repeat per mode)")
    s.add_argument("--k2", type=float, action="append", required=True)
    s.add_argument("--q", type=float, action="append", required=True)
    s.add_argument("--c0", type=float, required=True, help="static capacitance, F")
    s.add_argument("--rs", type=float, default=0.0)
    s.add_argument("--ls", type=float, default=0.0)
    s.add_argument("--r0", type=float, default=0.0)
    s.add_argument("--noise-db", type=float, default=None)
    _add_grid(s, required=False)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("sweep", parents=[common], help="re-simulate over one stack parameter")
    s.add_argument("--stack")
    s.add_argument("--parameter", required=True, help="e.g. layers[0,2].thickness")
    s.add_argument("--values", help="comma-separated values (SI units)")
    s.add_argument("--start", dest="vstart", type=float)
    s.add_argument("--stop", dest="vstop", type=float)
    s.add_argument("--steps", type=int)
    _add_grid(s)
    s.add_argument("--prominence-db", type=float, default=3.0)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("convert", parents=[common], help="Touchstone <-> CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True, help="file name inside the output directory")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("survey", parents=[common], help="rank resonators by FoM")
    s.add_argument("--input", help="CSV label,frequency_hz,k2,q,technology")
    s.add_argument("--min-frequency", type=float, default=15e9)
    s.set_defaults(func=cmd_survey)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_INVALID
    if args.smooth_window < 1 or args.smooth_window % 2 == 0:
        print("mmfbar: error: --smooth-window must be a positive odd integer", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(args.out_dir or os.environ.get(ENV_OUT_DIR) or "mmfbar-out")
    run = Run(args.command, out_dir)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = lambda m, c, *a, **k: print(f"warning: {m}", file=sys.stderr)
            args.func(run, args)
        run.finish()
    except FitError as exc:
        print(f"mmfbar {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ConfigError, TouchstoneError, ValueError) as exc:
        print(f"mmfbar {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"mmfbar {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
