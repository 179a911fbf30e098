"""Command-line front end: diagnose, estimate, simulate, productivity.

Every command is deterministic given its inputs, flags, and seed, and emits
a run manifest (resolved options, input digests, seed, tool version) so a
run can be reproduced bit-for-bit.  Domain errors map to stable exit codes:

    0  success
    2  usage, parse, or I/O error
    3  no four-cycles in the network
    4  degenerate cycle statistics (uninformative denominator)
    5  identification failure (connectivity / diameter conditions)
    6  other domain error
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field

import click

from . import __version__
from .diagnostics import build_report, connected_components, largest_component
from .estimation import (
    DEFAULT_SEED,
    InstrumentSet,
    estimate_beta,
    modularity_test,
    read_instrument_file,
)
from .exceptions import (
    DegenerateStatisticError,
    EdgeListParseError,
    EmptyNetworkError,
    MatchnetError,
    NoCyclesError,
    NotIdentifiedError,
    UninformativeCyclesError,
)
from .montecarlo import default_grid, format_grid_tables, read_grid_file, run_grid
from .network import read_edge_file
from .productivity import (
    als_fit,
    read_productivity_file,
    twfe_project,
    write_productivity_file,
)
from .network import ProductivityAssignment

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CYCLES = 3
EXIT_DEGENERATE = 4
EXIT_NOT_IDENTIFIED = 5
EXIT_DOMAIN = 6

OUTCOME_LABELING_WARNING = (
    "WARNING: outcome-based labeling reuses the noise being averaged over; "
    "the resulting estimate is biased and inference is invalid. "
    "Use it only to demonstrate that bias."
)


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    options: dict
    input_digests: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "options": self.options,
            "input_digests": self.input_digests,
            "seed": self.seed,
            "version": self.version,
        }


def _emit(payload: dict, manifest: RunManifest, fmt: str, out: str | None, text: str):
    """Write results plus manifest. With --out the manifest lands next to it."""
    if fmt == "json":
        doc = dict(payload)
        doc["manifest"] = manifest.to_dict()
        rendered = json.dumps(doc, indent=2, sort_keys=True)
    else:
        rendered = text + "\n\nrun manifest\n" + json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(rendered + "\n")
        with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        click.echo(rendered)


def _fail(exc: Exception) -> int:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, (EdgeListParseError, EmptyNetworkError, OSError, ValueError)):
        return EXIT_USAGE
    if isinstance(exc, NoCyclesError):
        return EXIT_NO_CYCLES
    if isinstance(exc, UninformativeCyclesError):
        return EXIT_DEGENERATE
    if isinstance(exc, NotIdentifiedError):
        return EXIT_NOT_IDENTIFIED
    if isinstance(exc, MatchnetError):
        return EXIT_DOMAIN
    raise exc


def _load_edges(path: str):
    try:
        return read_edge_file(path)
    except OSError as exc:
        raise EdgeListParseError(f"cannot read {path}: {exc}")


def _restrict_largest(net):
    ws, fs = largest_component(net)
    return net.subnetwork(ws, fs)


@click.group()
@click.version_option(version=__version__, prog_name="matchnet")
def main():
    """Toolkit for two-sided matching networks: structural diagnostics,
    interaction-parameter estimation with inference, productivity recovery,
    and a reproducible simulation engine."""


@main.command("diagnose")
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_diagnose(edges_path: str, fmt: str, out: str | None):
    """Report which recovery targets the network's structure supports."""
    manifest = RunManifest(
        command="diagnose",
        options={"edges": edges_path, "format": fmt, "out": out},
    )
    try:
        manifest.input_digests[edges_path] = _digest(edges_path)
        net = _load_edges(edges_path)
        report = build_report(net)
    except Exception as exc:  # noqa: BLE001
        sys.exit(_fail(exc))
    _emit(report.to_dict(), manifest, fmt, out, report.to_text())


@main.command("estimate")
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--worker-instruments", "w_instr", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--firm-instruments", "f_instr", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--labeling", type=click.Choice(["rank", "random", "outcome", "oracle"]), default="rank")
@click.option("--productivities", "prod_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="id,side,value file with true productivities (oracle labeling).")
@click.option("--beta-true", type=float, default=0.0, show_default=True,
              help="True interaction value accompanying --productivities.")
@click.option("--gamma", type=float, default=0.10, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--largest-component", "restrict", is_flag=True, default=False)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_estimate(
    edges_path, w_instr, f_instr, labeling, prod_path, beta_true, gamma, seed, restrict, fmt, out
):
    """Estimate the interaction parameter from edge-disjoint four-cycles."""
    manifest = RunManifest(
        command="estimate",
        options={
            "edges": edges_path,
            "worker_instruments": w_instr,
            "firm_instruments": f_instr,
            "labeling": labeling,
            "productivities": prod_path,
            "beta_true": beta_true,
            "gamma": gamma,
            "largest_component": restrict,
            "format": fmt,
            "out": out,
        },
        seed=seed,
    )
    try:
        for path in (edges_path, w_instr, f_instr, prod_path):
            if path:
                manifest.input_digests[path] = _digest(path)
        net = _load_edges(edges_path)
        if restrict:
            net = _restrict_largest(net)
        instruments = None
        if labeling == "rank":
            if not (w_instr and f_instr):
                raise ValueError(
                    "rank labeling requires --worker-instruments and --firm-instruments"
                )
            instruments = InstrumentSet(
                z_alpha=read_instrument_file(w_instr),
                z_psi=read_instrument_file(f_instr),
            )
        prod = None
        if labeling == "oracle":
            if not prod_path:
                raise ValueError("oracle labeling requires --productivities")
            alpha, psi = read_productivity_file(prod_path)
            prod = ProductivityAssignment(alpha=alpha, psi=psi, beta=beta_true)
        est = estimate_beta(
            net, labeling=labeling, instruments=instruments, gamma=gamma, seed=seed, prod=prod
        )
        try:
            reject = modularity_test(est).reject
        except DegenerateStatisticError:
            reject = None  # 0/0 statistic: exactly additive noiseless data
    except Exception as exc:  # noqa: BLE001
        sys.exit(_fail(exc))

    payload = {
        "beta_hat": est.beta_hat,
        "se": est.scale,
        "ci_low": est.ci[0],
        "ci_high": est.ci[1],
        "t_stat": est.t_stat,
        "p_value": est.p_value,
        "n_cycles": est.n_cycles,
        "gamma": est.gamma,
        "labeling_rule": est.labeling_rule,
        "seed": est.seed,
        "reject_no_complementarities": reject,
    }
    if labeling == "outcome":
        payload["warning"] = OUTCOME_LABELING_WARNING
    lines = [
        "interaction parameter estimate",
        "-" * 30,
        f"beta_hat    : {est.beta_hat:.10g}",
        f"se (scale)  : {est.scale:.10g}",
        f"ci ({1-gamma:.0%})    : ({est.ci[0]:.10g}, {est.ci[1]:.10g})",
        f"t_stat      : {est.t_stat:.10g}",
        f"p_value     : {est.p_value:.10g}",
        f"n_cycles    : {est.n_cycles}",
        f"labeling    : {est.labeling_rule} (seed {est.seed})",
        f"reject H0 (no complementarities) at gamma={gamma:g}: "
        + ("degenerate statistic" if reject is None else str(reject)),
    ]
    if labeling == "outcome":
        lines.append(OUTCOME_LABELING_WARNING)
    _emit(payload, manifest, fmt, out, "\n".join(lines))


@main.command("simulate")
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="sigma,L,p,beta0 cells; the full default grid when omitted.")
@click.option("--reps", type=int, default=10_000, show_default=True)
@click.option("--gamma", type=float, default=0.10, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def cmd_simulate(grid_path, reps, gamma, seed, threads, out, fmt):
    """Run the simulation grid and emit tables of replication aggregates."""
    manifest = RunManifest(
        command="simulate",
        options={
            "grid": grid_path,
            "reps": reps,
            "gamma": gamma,
            "threads": threads,
            "format": fmt,
            "out": out,
        },
        seed=seed,
    )
    try:
        if reps < 1:
            raise ValueError("--reps must be at least 1")
        if grid_path:
            manifest.input_digests[grid_path] = _digest(grid_path)
            cells = read_grid_file(grid_path)
        else:
            cells = default_grid()
        results = run_grid(cells, reps=reps, seed=seed, gamma=gamma, n_threads=threads)
    except Exception as exc:  # noqa: BLE001
        sys.exit(_fail(exc))
    tables = format_grid_tables(results)
    payload = {
        "cells": [
            {
                "sigma": c.sigma,
                "L": c.n_cycles,
                "p": c.p_correct,
                "beta0": c.beta0,
                "mse": r.mse,
                "mse_including": r.mse_including,
                "avg_ci_width": r.avg_ci_width,
                "rejection_rate": r.rejection_rate,
                "rep_failures": r.rep_failures,
                "reps": r.n_reps,
            }
            for c, r in results
        ]
    }
    _emit(payload, manifest, fmt, out, tables)


@main.command("productivity")
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["twfe", "als"]), required=True)
@click.option("--beta", type=float, default=0.0, show_default=True,
              help="Interaction value for als mode (from `estimate`).")
@click.option("--reference-worker", "ref_worker", type=str, default=None)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--max-iter", type=int, default=500, show_default=True)
@click.option("--largest-component", "restrict", is_flag=True, default=False,
              help="Restrict to the largest connected component first.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_productivity(edges_path, mode, beta, ref_worker, tol, max_iter, restrict, out):
    """Recover worker and firm productivities (additive or interacting model)."""
    manifest = RunManifest(
        command="productivity",
        options={
            "edges": edges_path,
            "mode": mode,
            "beta": beta,
            "reference_worker": ref_worker,
            "tol": tol,
            "max_iter": max_iter,
            "largest_component": restrict,
            "out": out,
        },
    )
    try:
        manifest.input_digests[edges_path] = _digest(edges_path)
        net = _load_edges(edges_path)
        comps = connected_components(net)
        if len(comps) > 1 and not restrict:
            raise NotIdentifiedError(
                f"network has {len(comps)} components; productivities are only "
                "identified per component (rerun with --largest-component)"
            )
        if restrict:
            net = _restrict_largest(net)
        if mode == "twfe":
            proj = twfe_project(net, reference_worker=ref_worker)
            alpha, psi = proj.alpha, proj.psi
            metadata = {
                "mode": "twfe",
                "normalized_worker": proj.normalized_worker,
                "residual_norm": proj.residual_norm,
            }
        else:
            fit = als_fit(
                net,
                beta_hat=beta,
                tol=tol,
                max_iter=max_iter,
                reference_worker=ref_worker,
            )
            alpha, psi = fit.alpha, fit.psi
            metadata = {
                "mode": "als",
                "beta": beta,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "final_objective": fit.objective_trace[-1],
                "scale": (
                    f"fixed by reference worker {ref_worker}"
                    if fit.scale_fixed
                    else "unit-norm transformed firm vector; one scale freedom remains"
                ),
            }
    except Exception as exc:  # noqa: BLE001
        sys.exit(_fail(exc))
    if out:
        write_productivity_file(out, alpha, psi, metadata)
        with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        for key, value in metadata.items():
            click.echo(f"# {key}: {value}")
        click.echo("id,side,value")
        for w in sorted(alpha):
            click.echo(f"{w},worker,{alpha[w]!r}")
        for f in sorted(psi):
            click.echo(f"{f},firm,{psi[f]!r}")
        click.echo("\nrun manifest")
        click.echo(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
