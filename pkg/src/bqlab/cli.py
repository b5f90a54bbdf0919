"""Command line: ``bqlab simulate | verify | report``.

Exit codes: 0 pass, 1 check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import boussinesq as bq
from .config import Scenario, build_field, load_scenario, resolve_tolerances
from .exceptions import ConfigurationError, DivergenceError, StepSizeError
from .reports import _clean
from .spectral import SpectralField, leray_project, save_field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _params(sc: Scenario) -> bq.PhysicsParams:
    th_src = build_field(sc.grid, sc.sources["theta"], "theta", sc.seed) if "theta" in sc.sources else None
    force = build_field(sc.grid, sc.sources["force"], "force", sc.seed) if "force" in sc.sources else None
    return bq.PhysicsParams(nu=sc.nu, kappa=sc.kappa, theta_source=th_src, force=force)


def _initial(sc: Scenario):
    th = build_field(sc.grid, sc.initial["theta"], "theta", sc.seed)
    u = leray_project(build_field(sc.grid, sc.initial["u"], "u", sc.seed))
    # the solver works with mean-zero fields
    zero_mean = lambda f: f.with_coeffs(f.coeffs * (sc.grid.k2 > 0))  # noqa: E731
    return zero_mean(th), zero_mean(u)


def run_scenario(sc: Scenario, out: Path) -> list:
    """Run a scenario, write its output tree under ``out`` and return the reports."""
    params = _params(sc)
    th0, u0 = _initial(sc)
    track = "blowup" in sc.diagnostics
    ledger = None
    if sc.scheme == "production":
        traj = bq.boussinesq_solve(bq.make_state(th0, u0, params), sc.T, sc.dt, sc.save_every, track_gradient=track)
    elif sc.scheme == "friedrichs":
        traj = bq.friedrichs_solve(th0, u0, sc.friedrichs_n, sc.mollifier_r, params, sc.T, sc.dt, sc.save_every,
                                   track_gradient=track)
    else:
        traj, ledger = bq.picard_solve(th0, u0, params, sc.T, sc.dt)

    out.mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(exist_ok=True)
    stride = sc.save_every if sc.scheme == "picard" else 1
    index = []
    for i in range(0, len(traj.fields), stride):
        s, t = traj.fields[i], float(traj.times[i])
        name = f"fields/snap_{i:06d}.bqf"
        save_field(out / name, SpectralField(sc.grid, np.concatenate([s.theta.coeffs, s.u.coeffs])), t)
        index.append((i, t, name))
    _write_csv(out / "index.csv", ["index", "time", "file"], index)

    reports, notes = [], []
    have_diag = bool(traj.diagnostics)
    if "energy" in sc.diagnostics:
        if have_diag:
            led, rep = bq.energy_report(traj, sc.p, sc.tolerances["energy_residual"], sc.tolerances["envelope_C_max"])
            rows = list(led.rows())
            _write_csv(out / "ledger_energy.csv", list(rows[0]), [list(r.values()) for r in rows])
            reports.append(rep)
        else:
            notes.append("energy ledger needs per-step diagnostics (production or friedrichs scheme)")
    if "theta_lp" in sc.diagnostics:
        led = bq.energy_ledger(traj, sc.p) if have_diag else None
        if led is not None:
            _write_csv(out / "ledger_theta_lp.csv", ["time", f"theta_L{sc.p:g}"],
                       zip(led.snapshot_times, led.theta_lp[sc.p]))
    if "blowup" in sc.diagnostics and have_diag:
        mon = bq.blowup_monitor(traj)
        cols = ["time", "u_l2"] + (["grad_integral"] if "grad_integral" in mon else [])
        _write_csv(out / "ledger_blowup.csv", cols, zip(*[mon["times"]] + [mon[c] for c in cols[1:]]))
        _write_csv(out / "ledger_theta_besov.csv", ["time", "theta_besov"], zip(mon["snapshot_times"], mon["theta_besov"]))
    if "smallness" in sc.diagnostics:
        reports.append(bq.smallness_monitor(traj, sc.tolerances["smallness_threshold"]))
    if ledger is not None:
        _write_csv(out / "ledger_picard.csv", ["iterate", "dU", "U"], zip(ledger.n, ledger.dU, ledger.U))

    (out / "reports.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    meta = {
        "name": sc.name, "seed": sc.seed, "dim": sc.grid.dim, "n": sc.grid.n, "T": traj.T, "dt": sc.dt,
        "nu": sc.nu, "kappa": sc.kappa, "p": sc.p, "scheme": sc.scheme, "diagnostics": sc.diagnostics,
        "notes": notes, "config": sc.raw,
    }
    (out / "scenario.json").write_text(json.dumps(_clean(meta), indent=2, default=str))
    return reports


def cmd_simulate(args) -> int:
    sc = load_scenario(args.config)
    out = Path(args.out) if args.out else sc.output
    try:
        reports = run_scenario(sc, out)
    except (StepSizeError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.inequality_id}: C={r.fitted_C:.4g}")
    print(f"wrote {out}")
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def _tolerance_overrides(path):
    if not path:
        return None
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return raw.get("tolerances", raw)


def cmd_verify(args) -> int:
    from .suites import run_suite

    tol = _tolerance_overrides(args.config)
    resolve_tolerances(tol)

    def progress(cid, rep, sec):
        if not args.quiet:
            print(f"{'PASS' if rep.passed else 'FAIL'} {cid}: C={rep.fitted_C:.4g} [{sec:.1f}s]", file=sys.stderr)

    res = run_suite(args.suite, seed=args.seed, tolerances=tol, only=args.check or None, progress=progress)
    text = res.to_json(indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    print(f"suite {res.suite}: {'PASS' if res.passed else 'FAIL'} in {res.runtime:.1f}s", file=sys.stderr)
    return EXIT_PASS if res.passed else EXIT_FAIL


def _run_params(run_dir: Path) -> dict:
    meta = run_dir / "scenario.json"
    if not meta.exists():
        return {}
    m = json.loads(meta.read_text())
    return {k: m[k] for k in ("name", "seed", "n", "T", "dt", "nu", "kappa", "p", "scheme") if k in m}


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def cmd_report(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise ConfigurationError(f"{root}: not a directory")
    files = sorted(root.rglob("ledger_*.csv"))
    if not files:
        raise ConfigurationError(f"{root}: no ledgers found")
    runs = sorted({p.parent for p in files})
    params = {r: _run_params(r) for r in runs}
    labels = {r: str(r.relative_to(root)) for r in runs}
    varying = [k for k in ("name", "seed", "n", "T", "dt", "nu", "kappa", "p", "scheme")
               if len({json.dumps(params[r].get(k)) for r in runs}) > 1]
    _write_csv(root / "runs.csv", ["run"] + list(varying or ["name"]),
               [[labels[r]] + [params[r].get(k, "") for k in (varying or ["name"])] for r in runs])
    kinds = sorted({p.name[len("ledger_"):-4] for p in files})
    written = []
    for kind in kinds:
        merged_header, merged = None, []
        wide = {}
        for r in runs:
            path = r / f"ledger_{kind}.csv"
            if not path.exists():
                continue
            header, rows = _read_csv(path)
            merged_header = merged_header or header
            merged += [[labels[r]] + row for row in rows]
            key = ",".join(f"{k}={params[r].get(k)}" for k in varying) or labels[r]
            wide[key] = (header, rows)
        _write_csv(root / f"merged_{kind}.csv", ["run"] + merged_header, merged)
        written.append(f"merged_{kind}.csv")
        if len(wide) > 1:
            # wide format: first column (time or iterate) then one column per run and quantity
            xname = merged_header[0]
            xs = sorted({float(row[0]) for h, rows in wide.values() for row in rows})
            cols, table = [], {x: {} for x in xs}
            for key, (header, rows) in wide.items():
                for j, q in enumerate(header[1:], start=1):
                    col = f"{q}[{key}]"
                    cols.append(col)
                    for row in rows:
                        table[float(row[0])][col] = row[j]
            _write_csv(root / f"wide_{kind}.csv", [xname] + cols,
                       [[x] + [table[x].get(c, "") for c in cols] for x in xs])
            written.append(f"wide_{kind}.csv")
    for w in written:
        print(root / w)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bqlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("simulate", help="run a scenario file and write its output tree")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (default: the scenario's 'output')")
    sp.set_defaults(func=cmd_simulate)
    vp = sub.add_parser("verify", help="run a verification suite and print its SuiteResult JSON")
    vp.add_argument("--suite", required=True)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--config", help="TOML file with a [tolerances] table")
    vp.add_argument("--check", action="append", help="run only this check id (repeatable)")
    vp.add_argument("--out", help="write the JSON here instead of stdout")
    vp.add_argument("--quiet", action="store_true")
    vp.set_defaults(func=cmd_verify)
    rp = sub.add_parser("report", help="merge run ledgers under a directory into CSV tables")
    rp.add_argument("--dir", required=True)
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
