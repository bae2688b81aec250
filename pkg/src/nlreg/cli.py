"""Command-line front end: kernel checks, growth constants, modulus tables,
solves, and verification runs from one INI config.

Subcommands: check, growth, modulus, solve, verify.  Common flags:
--config <path>, --out <dir>, --seed <u64>, --tol <rel tol override>.

Exit codes: 0 success; 2 malformed or incomplete config (message carries the
location); 3 kernel outside the supported class; 4 numeric failure inside a
module (the module's error message is printed).

Config layout (INI): the [kernel] section and its dotted subsections are the
kernel serialization format; [quadrature], [mesh], and [experiment] hold the
remaining knobs.  All sampling is drawn from the single configured seed.
"""

from __future__ import annotations

import argparse
import configparser
import math
import pathlib
import sys

import numpy as np

from . import _svg
from .conditions import run_all
from .continuity import ContinuityError
from .experiments import (
    GrowthScenario,
    HypothesisRefused,
    continuity_modulus,
    measure_oscillation,
    verify_boundedness,
    verify_continuity,
    verify_growth,
)
from .growth import (
    GrowthError,
    GrowthParams,
    UnsupportedKernelError,
    growth_params,
)
from .kernels import KernelConfigError, kernel_from_text
from .quadrature import QuadConfig, QuadratureError
from .solver import (
    AssemblyError,
    ExteriorData,
    MeshError,
    SolveError,
    assemble,
    build_mesh,
    solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    """Unusable run configuration; the message names file and section."""


class RunConfig:
    """Parsed run configuration: kernel, quadrature, mesh, experiment knobs."""

    def __init__(self, path: str, out: str | None, seed: int | None, tol: float | None):
        self.path = pathlib.Path(path)
        cp = configparser.ConfigParser()
        try:
            text = self.path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            # configparser errors carry line numbers
            raise ConfigError(f"{path}: {exc}") from exc
        if "kernel" not in cp:
            raise ConfigError(f"{path}: missing [kernel] section")
        try:
            self.kernel = kernel_from_text(text)
        except KernelConfigError as exc:
            raise ConfigError(f"{path}: [kernel] {exc}") from exc

        q = cp["quadrature"] if "quadrature" in cp else {}
        try:
            self.cfg = QuadConfig(
                rel_tol=float(q.get("rel_tol", 1e-8)),
                abs_tol=float(q.get("abs_tol", 1e-12)),
                max_subdivisions=int(q.get("max_subdivisions", 1 << 20)),
                split_radius=float(q.get("split_radius", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: [quadrature] {exc}") from exc
        if tol is not None:
            self.cfg = QuadConfig(
                rel_tol=tol,
                abs_tol=self.cfg.abs_tol,
                max_subdivisions=self.cfg.max_subdivisions,
                split_radius=self.cfg.split_radius,
            )

        self.mesh_spec = None
        if "mesh" in cp:
            m = cp["mesh"]
            try:
                self.mesh_spec = (
                    float(m["a"]), float(m["b"]), float(m["collar"]), float(m["h"])
                )
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{path}: [mesh] needs a, b, collar, h ({exc})") from exc

        self.exp = dict(cp["experiment"]) if "experiment" in cp else {}
        self.seed = seed if seed is not None else int(self.exp.get("seed", "0"))
        out = out or self.exp.get("out")
        if out is None:
            raise ConfigError(f"{path}: no output directory (--out or [experiment] out)")
        self.out = pathlib.Path(out)

    # -- typed [experiment] accessors -----------------------------------------

    def _need(self, key: str) -> str:
        if key not in self.exp:
            raise ConfigError(f"{self.path}: [experiment] missing key {key!r}")
        return self.exp[key]

    def floatv(self, key: str, default: float | None = None) -> float:
        raw = self.exp.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.path}: [experiment] missing key {key!r}")
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [experiment] {key} = {raw!r}: {exc}") from exc

    def intv(self, key: str, default: int) -> int:
        try:
            return int(self.exp.get(key, default))
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [experiment] {key}: {exc}") from exc

    def interval(self, key: str) -> tuple:
        parts = self._need(key).split()
        if len(parts) != 2:
            raise ConfigError(f"{self.path}: [experiment] {key} needs two numbers")
        return (float(parts[0]), float(parts[1]))

    def exterior(self) -> ExteriorData:
        if "g_breaks" in self.exp or "g_values" in self.exp:
            breaks = tuple(float(p) for p in self._need("g_breaks").split())
            values = tuple(float(p) for p in self._need("g_values").split())
            try:
                return ExteriorData(breaks, values)
            except ValueError as exc:
                raise ConfigError(f"{self.path}: [experiment] exterior data: {exc}") from exc
        return ExteriorData.constant(self.floatv("g", 0.0))

    def mesh(self):
        if self.mesh_spec is None:
            raise ConfigError(f"{self.path}: missing [mesh] section")
        return build_mesh(*self.mesh_spec)

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)


# -- subcommands ---------------------------------------------------------------


def cmd_check(rc: RunConfig) -> int:
    reports = []
    errored = []
    try:
        reports = list(run_all(rc.kernel, rc.cfg, seed=rc.seed))
    except Exception as exc:  # checker crash: report and flag, fail verdicts don't
        errored.append(f"{type(exc).__name__}: {exc}")
    blocks = [r.text_block() for r in reports]
    blocks.extend(f"checker error: {msg}" for msg in errored)
    rc.write("conditions.txt", "\n\n".join(blocks) + "\n")
    rc.write(
        "conditions.csv",
        "condition,verdict,constants\n" + "\n".join(r.csv_row() for r in reports) + "\n",
    )
    return EXIT_NUMERIC if errored else EXIT_OK


def _params(rc: RunConfig) -> GrowthParams:
    reports = run_all(rc.kernel, rc.cfg, seed=rc.seed)
    sigma = rc.exp.get("sigma")
    return growth_params(
        rc.kernel,
        reports,
        sigma=float(sigma) if sigma is not None else None,
        radii_count=rc.intv("radii_count", 12),
        cfg=rc.cfg,
    )


def _params_text(p: GrowthParams) -> str:
    lines = [
        f"alpha:          {p.alpha!r}",
        f"moment_bound:   {p.moment_bound!r}",
        f"annulus_ratio:  {p.annulus_ratio!r}",
        f"ball_ratio:     {p.ball_ratio!r}",
        f"amplitude:      {p.amplitude!r}",
        f"improvement:    {p.improvement!r}",
        f"dip:            {p.dip!r}",
        f"bump_norm:      {p.bump_norm!r}",
        f"case:           {p.case}",
        f"lam:            {p.lam!r}",
        f"R0:             {p.R0!r}",
        f"threshold_coef: {p.threshold_coef!r}",
    ]
    lines.extend(f"  {k} = {v!r}" for k, v in sorted(p.case_constants.items()))
    return "\n".join(lines) + "\n"


def cmd_growth(rc: RunConfig) -> int:
    params = _params(rc)
    rc.write("params.txt", _params_text(params))
    rc.write("h_table.csv", params.table_csv())
    rc.write(
        "radii.csv",
        "k,r\n" + "\n".join(f"{k},{r!r}" for k, r in enumerate(params.radii)) + "\n",
    )
    return EXIT_OK


def cmd_modulus(rc: RunConfig) -> int:
    params = _params(rc)
    omega, schedule, k_tilde, r_star = continuity_modulus(
        rc.kernel,
        params,
        rc.interval("a_set"),
        rc.interval("b_star"),
        rc.interval("b_set"),
        w_sup=rc.floatv("w_sup", 0.0),
        n_max=rc.intv("n_max", 24),
        cfg=rc.cfg,
    )
    rc.write("modulus.csv", omega.csv())
    rc.write("schedule.csv", schedule.csv())
    rc.write(
        "modulus.txt",
        f"k_tilde: {k_tilde!r}\nr_star: {r_star!r}\ncomplete: {schedule.complete}\n",
    )
    return EXIT_OK


def _benchmark_error(mesh, values) -> float:
    xs = mesh.nodes[mesh.interior]
    exact = np.sqrt(np.maximum(1.0 - xs * xs, 0.0)) / math.pi
    return float(np.linalg.norm(values[mesh.interior] - exact) / np.linalg.norm(exact))


def cmd_solve(rc: RunConfig) -> int:
    mesh = rc.mesh()
    w = rc.exp.get("w")
    system = assemble(rc.kernel, mesh, w=float(w) if w is not None else None, cfg=rc.cfg)
    u = solve(system, f=rc.floatv("f", 0.0), g=rc.exterior())
    rows = ["x,u"]
    rows.extend(f"{float(x)!r},{float(v)!r}" for x, v in zip(mesh.nodes, u.values))
    if rc.exp.get("benchmark", "").lower() in ("1", "true", "yes"):
        rows.append(f"l2_rel_error,{_benchmark_error(mesh, u.values)!r}")
    rc.write("solution.csv", "\n".join(rows) + "\n")
    rc.write("solution.svg", _svg.polyline_chart(mesh.nodes, u.values, "u(x)"))
    return EXIT_OK


def cmd_verify(rc: RunConfig) -> int:
    which = rc.exp.get("which", "boundedness").split()
    mesh = rc.mesh()
    f = rc.floatv("f", 0.0)
    g = rc.exterior()
    rows = ["tag,quantity,value"]

    def emit(rep):
        rc.write(f"report_{rep.tag.replace('-', '_')}.txt", rep.text())
        rows.append(f"{rep.tag},measured,{rep.measured!r}")
        rows.append(f"{rep.tag},predicted,{rep.predicted!r}")
        rows.append(f"{rep.tag},slack,{rep.slack!r}")
        rows.append(f"{rep.tag},verdict,{rep.verdict}")
        rows.extend(f"{rep.tag},{name},{value!r}" for name, value in rep.quantities)

    for tag in which:
        if tag == "boundedness":
            w = rc.exp.get("w")
            emit(verify_boundedness(
                rc.kernel, mesh, f=f,
                w=float(w) if w is not None else None, g=g,
                refinements=rc.intv("refinements", 3),
                samples=rc.intv("samples", 1),
                seed=rc.seed, cfg=rc.cfg,
            ))
        elif tag == "oscillation":
            u = solve(assemble(rc.kernel, mesh, cfg=rc.cfg), f=f, g=g)
            radii = [float(p) for p in rc._need("radii").split()]
            trace = measure_oscillation(u, rc.floatv("x0", 0.0), radii)
            rc.write("oscillation.csv", trace.csv())
            rc.write("oscillation.svg", _svg.polyline_chart(
                [r for r, _ in trace.pairs], [o for _, o in trace.pairs], "O(r)"))
            rc.write("u.svg", _svg.polyline_chart(mesh.nodes, u.values, "u(x)"))
        elif tag == "continuity":
            params = _params(rc)
            a_set = rc.interval("a_set")
            b_star = rc.interval("b_star")
            b_set = rc.interval("b_set")
            u = solve(assemble(rc.kernel, mesh, cfg=rc.cfg), f=f, g=g)
            emit(verify_continuity(u, f, rc.kernel, a_set, b_star, b_set, params, cfg=rc.cfg))
            omega, schedule, _, _ = continuity_modulus(
                rc.kernel, params, a_set, b_star, b_set, cfg=rc.cfg)
            rc.write("modulus.csv", omega.csv())
            rc.write("schedule.csv", schedule.csv())
            ts = [p[0] for p in omega.breakpoints]
            rc.write("modulus.svg", _svg.polyline_chart(
                ts, [p[1] for p in omega.breakpoints], "omega(t)"))
        elif tag == "growth":
            params = _params(rc)
            scenario = GrowthScenario(
                f=f, g=g, r=rc.floatv("r_inner"), center=rc.floatv("x0", 0.0))
            emit(verify_growth(
                rc.kernel, params, rc.floatv("r_outer"), scenario, mesh, cfg=rc.cfg))
        else:
            raise ConfigError(f"{rc.path}: [experiment] unknown verification {tag!r}")
    rc.write("reports.csv", "\n".join(rows) + "\n")
    return EXIT_OK


_COMMANDS = {
    "check": cmd_check,
    "growth": cmd_growth,
    "modulus": cmd_modulus,
    "solve": cmd_solve,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlreg", description="nonlocal-kernel checks, constants, and solves"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
    args = parser.parse_args(argv)
    try:
        rc = RunConfig(args.config, args.out, args.seed, args.tol)
        code = _COMMANDS[args.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedKernelError as exc:
        print(f"unsupported kernel: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (
        QuadratureError,
        MeshError,
        AssemblyError,
        SolveError,
        GrowthError,
        ContinuityError,
        HypothesisRefused,
        ValueError,
    ) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
