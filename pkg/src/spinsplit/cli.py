"""Command-line driver.

Exit codes: 0 success, 2 config error, 3 verification failure,
4 insufficient data, 5 solver failure.  Flags may also be set through
``SPINSPLIT_CONFIG``, ``SPINSPLIT_OUT``, ``SPINSPLIT_SEED``,
``SPINSPLIT_THREADS`` and ``SPINSPLIT_DETERMINISTIC``; flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import plotting
from .analysis import (
    SplittingTable,
    check_order_observable,
    fit_scaling,
    ground_basis,
    ground_configurations,
    magnetization,
    sweep_splitting,
    symmetry_resolve,
)
from .config import RunConfig, build_model, load_config
from .eigensolve import cluster_degeneracies, low_spectrum
from .errors import ConfigError, InsufficientDataError, SpinSplitError, VerificationError
from .models import check_peierls, check_symmetry, global_flip, spectral_gap, verify_classical
from .trotter import TROTTER_COLUMNS, trotter_convergence

logger = logging.getLogger("spinsplit")

ENV_PREFIX = "SPINSPLIT_"


class Run:
    """Resolved config plus output helpers for one invocation."""

    def __init__(self, cfg: RunConfig, out: Path, deterministic: bool, threads: int):
        self.cfg = cfg
        self.out = out
        self.deterministic = deterministic
        self.threads = threads
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.yaml").write_text(cfg.dump())

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def write_json(self, name: str, payload: dict):
        if self.wants("json"):
            (self.out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows):
        if self.wants("csv"):
            with (self.out / name).open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)


def _section(cfg: RunConfig, name: str):
    sec = getattr(cfg, name)
    if sec is None:
        raise ConfigError(f"config has no '{name}' section")
    return sec


def cmd_build(run: Run) -> int:
    cfg = run.cfg
    settings = cfg.solver.settings()
    H = build_model(cfg.model)
    rep = verify_classical(H)
    report = {
        "model": H.name,
        "n_spins": H.n_sites,
        "n_terms": rep.n_terms,
        "classical": rep.commuting,
        "max_support": rep.max_support,
        "support_limit": rep.support_limit,
        "offending_pairs": [[str(H.classical_terms.terms[i]), str(H.classical_terms.terms[j])]
                            for i, j in rep.offending_pairs],
        "perturbation": H.perturbation.label if H.perturbation else None,
        "perturbation_off_diagonal": H.perturbation.off_diagonal if H.perturbation else None,
        "epsilon": H.epsilon,
    }
    if not rep.ok:
        run.write_json("build_report.json", report)
        print(f"{H.name}: classical: no")
        for a, b in report["offending_pairs"]:
            print(f"  non-commuting pair: [{a}] vs [{b}]")
        if not rep.support_ok:
            print(f"  support {rep.max_support} exceeds C={rep.support_limit}")
        return VerificationError.exit_code
    H0 = H.with_epsilon(0.0)
    gap = spectral_gap(H0, settings)
    spec = low_spectrum(H0.classical_terms, min(H0.classical_terms.dim,
                                                max(settings.k, (H.expected_degeneracy or 2) + 2)),
                        settings, with_vectors=False)
    m = cluster_degeneracies(spec, settings.cluster_tol).ground_multiplicity
    report.update(gap=gap, ground_degeneracy=m,
                  ground_energy=float(spec.eigenvalues[0]),
                  low_spectrum=[float(e) for e in spec.eigenvalues])
    if H.classical_terms.is_diagonal:
        basis = ground_basis(H0, settings)
        sym = check_symmetry(H, [global_flip(H.n_sites)], basis, seed=settings.seed)
        report["symmetry"] = {
            "generators": [str(g) for g in sym.generators],
            "commutes_with_H": sym.commutes_with_H,
            "transitive_on_ground_basis": sym.transitive_on_ground_basis,
            "ground_configurations": ground_configurations(basis),
            "orbit": sym.orbit,
            "offending_terms": [t for _, t in sym.offending],
        }
    else:
        report["symmetry"] = None
    run.write_json("build_report.json", report)
    sym_txt = ("n/a" if report["symmetry"] is None else
               "yes" if report["symmetry"]["commutes_with_H"]
               and report["symmetry"]["transitive_on_ground_basis"] else "no")
    print(f"{H.name}: n_spins={H.n_sites} terms={rep.n_terms} m={m}, "
          f"gap={gap:.6g}{' > 0' if gap > 0 else ''}, classical: yes, symmetry: {sym_txt}")
    return 0 if gap > 0 else VerificationError.exit_code


def cmd_spectrum(run: Run) -> int:
    cfg = run.cfg
    settings = cfg.solver.settings()
    H = build_model(cfg.model)
    spec = low_spectrum(H.operator(), min(settings.k, 1 << H.n_sites), settings, with_vectors=True)
    clusters = cluster_degeneracies(spec, settings.cluster_tol)
    record = spec.record(model=H.name, epsilon=H.epsilon)
    record["cluster_sizes"] = clusters.sizes
    run.write_json("spectrum.json", record)
    run.write_csv("spectrum.csv", ["index", "eigenvalue", "residual"],
                  [[i, repr(float(e)), repr(float(r))]
                   for i, (e, r) in enumerate(zip(spec.eigenvalues, spec.residual_norms))])
    if run.wants("png"):
        plotting.plot_spectrum(spec.eigenvalues, run.out / "spectrum.png",
                               f"{H.name}, eps={H.epsilon:g}")
    print(f"{H.name} eps={H.epsilon:g}: " + " ".join(f"{e:.10g}" for e in spec.eigenvalues))
    print(f"cluster sizes: {clusters.sizes}")
    return 0


def cmd_sweep(run: Run) -> int:
    cfg = run.cfg
    sw = _section(cfg, "sweep")
    settings = cfg.solver.settings()
    builder = lambda ext: build_model(cfg.model, ext)  # noqa: E731
    m = sw.m or builder(sw.sizes[0]).expected_degeneracy
    if m is None:
        raise ConfigError("sweep.m is required for custom models")
    path = run.out / "splitting.csv"
    table = sweep_splitting(builder, sw.sizes, sw.epsilons, m, settings, path,
                            workers=run.threads)
    for r in table:
        print(f"{r.model} eps={r.epsilon:g} split={r.splitting_spectral:.6g} "
              f"diag={r.splitting_diagonal:.3g} first={r.splitting_first_order:.3g} "
              f"gap={r.gap_to_next:.4g}{' (floor)' if r.floor_flag else ''}")
    if run.wants("png") and len(table):
        plotting.plot_splitting(table.records, run.out / "splitting.png", settings.floor)
    if not len(table) and table.failures:
        for cell, msg in table.failures:
            print(f"failed {cell}: {msg}", file=sys.stderr)
        return 5
    return 0


def cmd_fit(run: Run, table_path: str | None, epsilon: float | None, delta: float | None) -> int:
    cfg = run.cfg
    path = Path(table_path) if table_path else run.out / "splitting.csv"
    if not path.exists():
        raise ConfigError(f"table {path} not found")
    table = SplittingTable.read_csv(path)
    fc = cfg.fit
    epsilon = epsilon if epsilon is not None else (fc.epsilon if fc else None)
    delta = delta if delta is not None else (fc.delta if fc else None)
    if epsilon is None:
        eps_values = sorted({r.epsilon for r in table if r.epsilon > 0})
        if len(eps_values) != 1:
            raise ConfigError(f"table holds epsilons {eps_values}; pass --epsilon")
        epsilon = eps_values[0]
    fit = fit_scaling(table.at_epsilon(epsilon))
    report = fit.report()
    report["epsilon"] = epsilon
    if delta is not None:
        report["delta"] = delta
        report["n0"] = fit.n0(delta)
    run.write_json("fit_report.json", report)
    if run.wants("png"):
        plotting.plot_fit(fit, run.out / "fit.png")
    for name, cand in fit.candidates.items():
        mark = "*" if name == fit.model else " "
        print(f"{mark} {name:16s} c={cand.c:.10g} rmse={cand.rmse:.4g}")
    print(f"selected: {fit.model}, c={fit.c:.10g}")
    if delta is not None:
        print(f"N0(delta={delta:g}) = {report['n0']}")
    return 0


def cmd_trotter(run: Run) -> int:
    cfg = run.cfg
    tc = _section(cfg, "trotter")
    H = build_model(cfg.model)
    rows = trotter_convergence(H.classical_terms, H.perturbation_operator, tc.epsilon, tc.beta,
                               tc.steps, tc.mode, tc.probes, cfg.solver.seed)
    run.write_csv("trotter.csv", TROTTER_COLUMNS, [r.row() for r in rows])
    if run.wants("png"):
        plotting.plot_trotter(rows, run.out / "trotter.png")
    for r in rows:
        print(f"steps={r.steps:5d} value={r.trotter_value:.12g} exact={r.exact_value:.12g} "
              f"err={r.abs_error:.3e} err*steps={r.error_times_steps:.4g}")
    return 0


def cmd_order(run: Run) -> int:
    cfg = run.cfg
    oc = _section(cfg, "order")
    settings = cfg.solver.settings()
    H = build_model(cfg.model).with_epsilon(oc.epsilon)
    spec = low_spectrum(H.operator(), oc.states, settings)
    states = spec.vectors(slice(0, oc.states))
    if oc.resolve_symmetry and H.classical_terms.is_diagonal:
        _, states = symmetry_resolve(H, states, global_flip(H.n_sites))
    rep = check_order_observable(H, magnetization(H.n_sites, oc.axis), states)
    payload = rep.report()
    payload.update(model=H.name, epsilon=oc.epsilon, ok=rep.ok)
    run.write_json("order_report.json", payload)
    print(f"{H.name} eps={oc.epsilon:g}: locality={rep.locality_ok} "
          f"commuting={rep.mutual_commute_ok} zeta={rep.zeta:.6g}")
    for i, (mu, s2) in enumerate(zip(rep.mean_values, rep.second_moments)):
        print(f"  state {i}: <O>={mu:.3e} <O^2>={s2:.6g}")
    return 0 if rep.ok else VerificationError.exit_code


def cmd_peierls(run: Run) -> int:
    cfg = run.cfg
    pc = _section(cfg, "peierls")
    H = build_model(cfg.model).with_epsilon(0.0)
    rep = check_peierls(H, pc.ground_config, pc.max_region)
    region, energy, boundary = rep.worst()
    payload = {
        "model": H.name,
        "max_region": pc.max_region,
        "regions": rep.n_regions,
        "rho": rep.rho,
        "worst_region": sorted(region),
        "worst_energy": energy,
        "worst_boundary": boundary,
    }
    run.write_json("peierls_report.json", payload)
    if run.wants("csv"):
        run.write_csv("peierls.csv", ["size", "energy", "boundary", "ratio"],
                      [[len(r), repr(e), b, repr(e / b)] for r, e, b in rep.samples])
    print(f"{H.name}: {rep.n_regions} regions up to size {pc.max_region}, rho={rep.rho:.12g}")
    return 0 if rep.rho > 0 else VerificationError.exit_code


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=os.environ.get(ENV_PREFIX + "CONFIG"))
    common.add_argument("--out", default=os.environ.get(ENV_PREFIX + "OUT"))
    common.add_argument("--deterministic", action="store_true",
                        default=os.environ.get(ENV_PREFIX + "DETERMINISTIC", "").lower()
                        in ("1", "true", "yes"))
    common.add_argument("--seed", type=int, default=os.environ.get(ENV_PREFIX + "SEED"))
    common.add_argument("--threads", type=int, default=int(os.environ.get(ENV_PREFIX + "THREADS", 1)))
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="spinsplit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("build", "build a model and verify its structural preconditions"),
        ("spectrum", "lowest eigenvalues of H(eps)"),
        ("sweep", "splitting over sizes and perturbation strengths"),
        ("trotter", "Trotterised partition function convergence"),
        ("order", "order-observable moments"),
        ("peierls", "Peierls constant by region enumeration"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)
    fit = sub.add_parser("fit", parents=[common], help="fit a finite-size scaling law")
    fit.add_argument("table", nargs="?")
    fit.add_argument("--epsilon", type=float)
    fit.add_argument("--delta", type=float)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            if args.command != "fit":
                raise ConfigError("--config is required")
            cfg = RunConfig.model_validate({"model": {"name": "ising"}})
        else:
            cfg = load_config(args.config)
        if args.seed is not None:
            cfg.solver.seed = int(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.output.directory)
        run = Run(cfg, out, args.deterministic, args.threads)
        blas = 1 if args.deterministic else args.threads
        with threadpool_limits(limits=blas):
            if args.command == "fit":
                return cmd_fit(run, args.table, args.epsilon, args.delta)
            return globals()[f"cmd_{args.command}"](run)
    except SpinSplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
