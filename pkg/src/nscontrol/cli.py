"""Command-line entry point: ``nscontrol {simulate,control,diagnose,profile-check}``.

Exit codes: 0 success, 2 solver abort, 3 configuration error,
4 non-convergence or failed hypothesis check, 5 smallness thresholds exceeded.
All output files of a run are written only after the run succeeded, each one
through a temporary file and an atomic rename.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (DecayReport, OseenComponent, SeparableSource, decay_fit, ms_cancellation_check,
                          profile_gap, source_from_trajectory)
from .besov import RadialFourierProfile, heat_characterization
from .config import ConfigError, ExperimentConfig, atomic_write, csv_text
from .control import ControlDivergence, SmallnessError, run_control, smallness_check
from .forcing import ChiProfile, Forcing
from .grid import Grid, VectorField, set_threads
from .initial_data import KINDS, make_initial_data, random_perturbation, taylor_green
from .norms import heat_energy_integral, hminus1_norm, trajectory_norm
from .solver import SolverAbort, SolverConfig, heat_flow_trajectory, integrate

log = logging.getLogger("nscontrol")

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_FAIL, EXIT_SMALLNESS = 0, 2, 3, 4, 5

PRESETS = ("taylor_green", "curl_gaussian", "symmetric", "dipole", "high_ir", "bump_profile",
           "lambda0_profile", "pipeline_profile", "besov_rho1", "besov_rho2")


def preset_path(name: str) -> Path:
    """Filesystem path of a shipped preset configuration."""
    ref = resources.files("nscontrol") / "presets" / f"{name}.cfg"
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return Path(str(ref))


# --- builders -----------------------------------------------------------

def build_grid(cfg: ExperimentConfig) -> Grid:
    try:
        return Grid(cfg.grid.n, cfg.grid.N, float(cfg.grid.L))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_data(cfg: ExperimentConfig, grid: Grid) -> VectorField:
    d = cfg.data
    try:
        if d.kind == "taylor_green":
            a = taylor_green(grid, d.amplitude, d.wavenumber, d.perturbation)
        elif d.kind in KINDS:
            a = make_initial_data(d.kind, d.amplitude, grid, width=d.width, angle=d.angle)
        else:
            raise ConfigError(f"unknown data.kind {d.kind!r}; expected taylor_green or one of {KINDS}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if d.noise:
        rng = np.random.default_rng(cfg.seed)
        a = VectorField(grid, a.coeffs + random_perturbation(grid, d.noise * d.amplitude, rng).coeffs, True)
    return a


def build_chi(cfg: ExperimentConfig) -> ChiProfile:
    c = cfg.chi
    try:
        return ChiProfile(cfg.grid.n, float(c.R), float(c.Rprime), shape=c.shape, time_shape=c.time_shape)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid chi section: {exc}") from exc


def build_solver_config(cfg: ExperimentConfig, grid: Grid, forcing=None) -> SolverConfig:
    t = cfg.time
    try:
        return SolverConfig(grid, float(t.dt), float(t.T), forcing=forcing, snapshot_ratio=float(t.snapshot_ratio),
                            snapshot_times=[float(x) for x in t.snapshot_times] or None,
                            picard_check_times=[float(x) for x in t.picard_times],
                            r=float(cfg.control.r), cfl=float(t.cfl))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid time section: {exc}") from exc


def _name(cfg: ExperimentConfig, base: str) -> str:
    return f"{cfg.output.prefix}{base}"


def _decay_samples(traj, kind: str):
    if kind == "l2_squared":
        return traj.t, traj.l2 ** 2
    if kind == "l2":
        return traj.t, traj.l2
    if kind == "linf":
        return traj.t, traj.linf
    raise ConfigError(f"unknown fit.norm {kind!r}; expected l2_squared, l2 or linf")


def _fit(cfg: ExperimentConfig, traj) -> DecayReport:
    t, v = _decay_samples(traj, cfg.fit.norm)
    trusted = 0.05 * (cfg.grid.L / (2 * math.pi)) ** 2
    try:
        return decay_fit(t, v, (float(cfg.fit.t0), float(cfg.fit.t1)), trusted_max=trusted,
                         kind=cfg.fit.norm, n=cfg.grid.n)
    except ValueError as exc:
        raise ConfigError(f"invalid fit window: {exc}") from exc


def sigma_block(state) -> str:
    """Structured text for the converged control: sigma entries and summary values."""
    sig = state.sigma
    n = sig.shape[0]
    lines = [f"sigma.n = {n}"]
    for k in range(n):
        for l in range(k, n):
            lines.append(f"sigma.{k + 1}{l + 1} = {sig[k, l]:.16e}")
    lines += [
        f"sigma.max_abs = {state.sigma_max:.16e}",
        f"hminus1_sq = {state.hminus1_sq:.16e}",
        f"iterations = {state.m}",
        f"converged = {str(state.converged).lower()}",
        f"residual_anisotropy = {state.residual_anisotropy():.16e}",
        f"cbar = {state.energy[-1].cbar:.16e}",
    ]
    return "\n".join(lines) + "\n"


def smallness_text(rep) -> str:
    return "".join(f"smallness.{k} = {v:.16e}\n" for k, v in rep.named().items())


# --- commands -----------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    grid = build_grid(cfg)
    a = build_data(cfg, grid)
    forcing = None
    if cfg.forcing.coeffs:
        c = np.array(cfg.forcing.coeffs, dtype=float).reshape(grid.n, grid.n)
        try:
            forcing = Forcing(build_chi(cfg), c)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    scfg = build_solver_config(cfg, grid, forcing)
    if forcing is not None:
        try:
            forcing.chi.check_fits(grid, scfg.T)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    traj = integrate(scfg, a)
    rep = _fit(cfg, traj)
    t, v = _decay_samples(traj, cfg.fit.norm)
    ref = rep.reference["l2_squared_generic"] if cfg.fit.norm == "l2_squared" else rep.reference["l2_generic"]
    files = {
        "trajectory.csv": csv_text(traj.csv_header(), traj.csv_rows()),
        "decay.csv": csv_text(["t", "norm", "weighted"], [[ti, vi, ti ** ref * vi] for ti, vi in zip(t, v)]),
        "decay.txt": rep.text(),
    }
    if traj.picard is not None:
        p = traj.picard
        files["picard.csv"] = csv_text(["t", "residual_l2", "u_l2", "relative"],
                                       [[a_, b, c, d] for a_, b, c, d in zip(p.times, p.residual_l2, p.u_l2, p.relative)])
    _write_all(cfg, out, files)
    print(rep.text(), end="")
    if not rep.trusted:
        print(f"note: log-log fit has R^2 = {rep.r2:.6f} < 0.99; not a power law on this window")
    if traj.picard is not None:
        print(f"picard.max_relative = {float(np.max(traj.picard.relative)):.6e}")
    return EXIT_OK


def cmd_control(cfg: ExperimentConfig, out: Path, override_smallness: bool = False) -> int:
    grid = build_grid(cfg)
    a = build_data(cfg, grid)
    chi = build_chi(cfg)
    scfg = build_solver_config(cfg, grid)
    try:
        chi.check_fits(grid, scfg.T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    c = cfg.control
    if c.cbar_mode not in ("mean", "zero", "const"):
        raise ConfigError(f"unknown control.cbar_mode {c.cbar_mode!r}")
    try:
        state, traj = run_control(a, chi, scfg, tol=float(c.tol), max_iter=int(c.max_iter), cbar_mode=c.cbar_mode,
                                  cbar_const=c.cbar_const, thresholds=cfg.thresholds or None,
                                  override_smallness=override_smallness, r=float(c.r))
    except SmallnessError as exc:
        print(str(exc), file=sys.stderr)
        print(smallness_text(exc.report), end="")
        return EXIT_SMALLNESS
    except ControlDivergence as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    qs = [float(q) for q in cfg.gap.q]
    window = None
    if cfg.gap.t0 is not None and cfg.gap.t1 is not None:
        window = (float(cfg.gap.t0), float(cfg.gap.t1))
    reports = [ms_cancellation_check(traj, a, q, t_window=window, oversample=int(cfg.gap.oversample),
                                     energy=state.energy[-1]) for q in qs]
    header = ["t"] + [f"gap_q{_qname(q)}" for q in qs]
    rows = [[t] + [r.gap[i] for r in reports] for i, t in enumerate(reports[0].times)]
    summary = sigma_block(state)
    for q, r in zip(qs, reports):
        summary += (f"gap_q{_qname(q)}.verdict = {r.verdict}\n"
                    f"gap_q{_qname(q)}.decade_ratio = {r.extra['decade_ratio']:.16e}\n")
    summary += f"pairing_relative = {reports[0].extra['pairing_relative']:.16e}\n"
    summary += f"isotropic_pairing_max = {reports[0].extra['isotropic_pairing_max']:.16e}\n"
    files = {
        "control_history.csv": csv_text(state.history_header(), state.history_rows()),
        "sigma.txt": summary,
        "gap.csv": csv_text(header, rows),
    }
    _write_all(cfg, out, files)
    print(summary, end="")
    return EXIT_OK


def _qname(q: float) -> str:
    return "inf" if math.isinf(q) else (str(int(q)) if float(q).is_integer() else str(q))


def build_profile(cfg: ExperimentConfig) -> RadialFourierProfile:
    p = cfg.profile
    try:
        if p.kind == "power_law":
            return RadialFourierProfile.power_law(float(p.p), float(p.rho_min), float(p.rho_max),
                                                  int(p.points), cfg.grid.n)
        if p.kind == "table" and p.rho:
            return RadialFourierProfile(np.array(p.rho, dtype=float), np.array(p.amplitude, dtype=float), cfg.grid.n)
        rho = np.geomspace(float(p.rho_min), float(p.rho_max), int(p.points))
        return RadialFourierProfile(rho, np.zeros_like(rho), cfg.grid.n)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed profile: {exc}") from exc


def cmd_diagnose(cfg: ExperimentConfig, out: Path) -> int:
    prof = build_profile(cfg)
    try:
        rep = heat_characterization(prof, float(cfg.profile.s))
    except (ValueError, NotImplementedError) as exc:
        raise ConfigError(f"malformed profile: {exc}") from exc
    grid = build_grid(cfg)
    a = build_data(cfg, grid)
    chi = build_chi(cfg)
    small = smallness_check(a, chi, float(cfg.control.r))
    times = np.geomspace(1e-2, 0.05 * (grid.L / (2 * math.pi)) ** 2, 49)
    flow = heat_flow_trajectory(a, times)
    norm_rows = []
    for spec in cfg.profile.trajectory_norms or ["X_r:4", "Xbar_p:2"]:
        kind, _, idx = str(spec).partition(":")
        try:
            norm_rows.append(trajectory_norm(flow, kind, float(idx or 2)).csv_row())
        except ValueError as exc:
            raise ConfigError(f"bad trajectory norm {spec!r}: {exc}") from exc
    hm1 = hminus1_norm(a)
    quad = heat_energy_integral(a)
    files = {
        "besov_dyadic.csv": csv_text(["j", "d"], rep.dyadic_rows()),
        "besov_heat.csv": csv_text(["t", "h"], rep.heat_rows()),
        "besov.txt": (f"s = {rep.s:.16e}\nr = {rep.r:.16e}\ndyadic_verdict = {rep.dyadic_verdict}\n"
                      f"heat_verdict = {rep.heat_verdict}\nconsistent = {str(rep.consistent).lower()}\n"
                      + "".join(f"note = {x}\n" for x in rep.notes)),
        "trajectory_norms.csv": csv_text(["kind", "index", "value", "argmax_t"], norm_rows),
        "smallness.csv": csv_text(["quantity", "value"], [[k, v] for k, v in small.named().items()]),
        "hminus1.csv": csv_text(["quantity", "value"], [["hminus1_norm", hm1.norm],
                                                        ["half_hminus1_sq", hm1.heat_energy_integral],
                                                        ["heat_energy_quadrature", quad]]),
    }
    _write_all(cfg, out, files)
    print(files["besov.txt"], end="")
    print(smallness_text(small), end="")
    return EXIT_OK


def cmd_profile_check(cfg: ExperimentConfig, out: Path) -> int:
    grid = build_grid(cfg)
    s = cfg.source
    k, l, j = (int(i) for i in s.kernel)
    M = OseenComponent(k, l, j, bool(s.kernel_symmetric))
    if s.kind == "bump":
        try:
            terms = [(float(w), ChiProfile(grid.n, float(R), float(Rp), shape=s.shape, time_shape=s.time_shape))
                     for w, R, Rp in zip(s.weights, s.R, s.Rprime)]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid source: {exc}") from exc
        W = SeparableSource(terms)
    elif s.kind == "pipeline":
        a = build_data(cfg, grid)
        traj = integrate(build_solver_config(cfg, grid), a, check_picard=False)
        W = source_from_trajectory(traj, k, l)
    else:
        raise ConfigError(f"unknown source.kind {s.kind!r}; expected bump or pipeline")
    if not 0 < float(s.t0) < float(s.t1):
        raise ConfigError("source.t0 and source.t1 must satisfy 0 < t0 < t1")
    ts = np.geomspace(float(s.t0), float(s.t1), int(s.samples))
    qs = [float(q) for q in s.q]
    try:
        reports = [profile_gap(M, W, q, ts, grid, oversample=int(s.oversample), breakdown=bool(s.breakdown))
                   for q in qs]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    header = ["t"] + [f"gap_q{_qname(q)}" for q in qs]
    rows = [[t] + [r.gap[i] for r in reports] for i, t in enumerate(ts)]
    text = f"lambda = {reports[0].lam:.16e}\n"
    for q, r in zip(qs, reports):
        tag = f"gap_q{_qname(q)}"
        text += f"{tag}.verdict = {r.verdict}\n"
        text += "".join(f"{tag}.decade_ratio[{t:.6g}] = {x:.16e}\n" for t, x in r.decade_ratios[-3:])
        text += "".join(f"{tag}.hypothesis.{key} = {val}\n" for key, val in r.hypothesis.items())
    files = {"profile_gap.csv": csv_text(header, rows), "profile_check.txt": text}
    for q, r in zip(qs, reports):
        if r.breakdown:
            files[f"breakdown_q{_qname(q)}.csv"] = csv_text(
                ["t", "I1", "I2", "I3", "I4"], [[t] + list(v) for t, v in r.breakdown.items()])
    _write_all(cfg, out, files)
    print(text, end="")
    failed = [r for r in reports if not r.hypothesis.get("ok", True)]
    return EXIT_FAIL if failed else EXIT_OK


def _write_all(cfg: ExperimentConfig, out: Path, files: dict[str, str]) -> None:
    for base, text in files.items():
        atomic_write(out / _name(cfg, base), text)


COMMAND_FUNCS = {"simulate": cmd_simulate, "control": cmd_control, "diagnose": cmd_diagnose,
                 "profile-check": cmd_profile_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nscontrol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMAND_FUNCS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="configuration file (key = value)")
        src.add_argument("--preset", choices=PRESETS, help="a shipped preset configuration")
        sp.add_argument("--output", type=Path, help="output directory (overrides output.directory)")
        sp.add_argument("--threads", type=int, help="FFT worker threads (results do not depend on it)")
        sp.add_argument("--override-smallness", action="store_true",
                        help="log, instead of failing on, exceeded smallness thresholds")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = args.config if args.config is not None else preset_path(args.preset)
        cfg = ExperimentConfig.from_file(path)
        if cfg.command is not None and cfg.command != args.command:
            log.info("config names command %r; running %r", cfg.command, args.command)
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise ConfigError(f"thread count must be >= 1, got {threads}")
        set_threads(threads)
        out = args.output if args.output is not None else Path(cfg.output.directory)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "control":
                return cmd_control(cfg, out, args.override_smallness)
            return COMMAND_FUNCS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverAbort as exc:
        print(f"solver aborted at t={exc.last_time:.6g}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
