"""Command-line front end: ``dtdcva calibrate|cva|default-corr --manifest FILE``.

The manifest is a flat ``key = value`` file; relative paths resolve against
the manifest's directory.  Every input is parsed and validated before any
computation starts.  Exit codes: 0 success, 1 validation failure, 2
computation failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .copula import build_structure, load_correlation
from .dtd import CreditName, DtdParams, calibrate_y0, spread_vol
from .engine import (CvaInputs, CvaRunConfig, default_correlation_analytic, fit_pd_for_default_correlation,
                     load_transition_matrix, quarterly_grid, run, simulate_default_correlation)
from .errors import ComputationError, DtdCvaError, ValidationError
from .market_data import (bootstrap_pd_curve, effective_time, load_cds_quotes, load_discount_curve,
                          load_spread_vol)
from .pricing import PartyConfig, load_portfolio, resolve_par_spreads

log = logging.getLogger("dtdcva")

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION = 0, 1, 2


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

@dataclass
class RunManifest:
    path: Path
    values: dict
    files: dict = field(default_factory=dict)

    @classmethod
    def read(cls, path) -> "RunManifest":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"manifest not found: {path}")
        values = {}
        for i, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{i}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k in values:
                raise ValidationError(f"{path}:{i}: duplicate key {k!r}")
            values[k] = v
        return cls(path, values)

    def get(self, key, default=None, required=False):
        if key not in self.values:
            if required:
                raise ValidationError(f"manifest is missing {key!r}")
            return default
        return self.values[key]

    def file(self, key, required=True) -> Path | None:
        v = self.get(key, required=required)
        if v is None:
            return None
        p = Path(v)
        if not p.is_absolute():
            p = self.path.parent / p
        if not p.is_file():
            raise ValidationError(f"{key}: file not found: {p}")
        self.files[key] = p
        return p

    def prefixed(self, prefix: str) -> dict:
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def number(self, key, default, conv=float):
        v = self.get(key)
        if v is None:
            return default
        try:
            return conv(v)
        except ValueError:
            raise ValidationError(f"{key}: not a number: {v!r}") from None

    def input_hash(self) -> str:
        """sha256 over the manifest text and every referenced file."""
        h = hashlib.sha256(self.path.read_bytes())
        for key in sorted(self.files):
            h.update(key.encode())
            h.update(self.files[key].read_bytes())
        return h.hexdigest()


def _flag(v: str) -> bool:
    v = str(v).strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValidationError(f"expected on/off, got {v!r}")


def _list(v: str, conv=str) -> list:
    try:
        return [conv(s.strip()) for s in v.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"bad list entry in {v!r}") from None


def _apply_overrides(m: RunManifest, args) -> None:
    for key, val in (("scenarios", args.scenarios), ("seed", args.seed), ("mode", args.mode),
                     ("netting", args.netting), ("out", args.out)):
        if val is not None:
            m.values[key] = str(val)
    if args.scenarios is not None:
        m.values["default_corr.scenarios"] = str(args.scenarios)


def _out_dir(m: RunManifest) -> Path:
    out = Path(m.get("out", "out"))
    if not out.is_absolute():
        out = m.path.parent / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header(m: RunManifest, extra: dict) -> str:
    lines = [f"# dtdcva {m.path.name}", f"# inputs_sha256 = {m.input_hash()}", f"# backend = {_kernels.BACKEND}"]
    lines += [f"# {k} = {v}" for k, v in extra.items()]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

def _load_names(m: RunManifest, names: list[str] | None = None, kappa: float = 0.0):
    quote_keys = m.prefixed("quotes.")
    names = names or list(quote_keys)
    if not names:
        raise ValidationError("manifest lists no quotes.<NAME> entries")
    disc = load_discount_curve(m.file("discount"))
    quotes, vols = {}, {}
    for n in names:
        if n not in quote_keys:
            raise ValidationError(f"no quotes.{n} entry")
        quotes[n] = load_cds_quotes(m.file(f"quotes.{n}"), n)
        vols[n] = load_spread_vol(m.file(f"vol.{n}"))
    return disc, quotes, vols


def _calibrate_names(disc, quotes, vols, ratings, kappa):
    out, failures = {}, []
    for n, q in quotes.items():
        try:
            curve = bootstrap_pd_curve(q, disc)
            # the time change must exist at every pillar
            effective_time(curve, 1.0, curve.times[1:])
            y0 = calibrate_y0(curve, vols[n])
            out[n] = CreditName(n, curve, DtdParams(y0, 0.0, kappa), q.recovery, ratings.get(n))
        except DtdCvaError as exc:
            failures.append(f"{n}: {exc}")
    return out, failures


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_calibrate(m: RunManifest) -> int:
    kappa = m.number("kappa", 0.0)
    disc, quotes, vols = _load_names(m)
    names, failures = _calibrate_names(disc, quotes, vols, m.prefixed("rating."), kappa)
    if failures:
        for f in failures:
            log.error("calibration failed for %s", f)
        return EXIT_VALIDATION
    out = _out_dir(m)
    t_curve = np.arange(1, 41) * 0.25
    rows = ["name,y0,t,p_d,tbar,sigma_i"]
    for n, cn in names.items():
        for t in cn.curve.times[1:]:
            rows.append(f"{n},{cn.params.y0!r},{t!r},{float(cn.curve.pd(t))!r},"
                        f"{effective_time(cn.curve, cn.params.y0, t)!r},{spread_vol(cn.curve, cn.params.y0, t)!r}")
    (out / "calibration.csv").write_text(_header(m, {"kappa": kappa}) + "\n".join(rows) + "\n")
    vol_rows = ["name,t,sigma_i"]
    for n, cn in names.items():
        vol_rows += [f"{n},{t!r},{s!r}" for t, s in zip(t_curve, spread_vol(cn.curve, cn.params.y0, t_curve))]
    (out / "sigma_i_curve.csv").write_text(_header(m, {"kappa": kappa}) + "\n".join(vol_rows) + "\n")
    for n, cn in names.items():
        print(f"{n:<12} y0 = {cn.params.y0:.12g}")
    return EXIT_OK


def _cva_setup(m: RunManifest):
    cp = m.get("counterparty", required=True)
    inv = m.get("investor", required=True)
    kappa = m.number("kappa", 0.0)
    sigma_m, loadings = load_correlation(m.file("correlation"), cp, inv)
    deals = load_portfolio(m.file("portfolio"))
    disc, quotes, vols = _load_names(m, list(loadings.names), kappa)
    tm = None
    trigger = m.get("trigger_rating")
    if m.get("transition") is not None:
        tm = load_transition_matrix(m.file("transition"))
    mode = m.get("mode", "conditional")
    netting = _flag(m.get("netting", "on"))
    n = m.number("scenarios", 10_000, int)
    seed = m.number("seed", 0, int)
    threads = m.number("threads", 1, int)
    step = m.number("time_step", 0.25)
    ratings = m.prefixed("rating.")
    rec = {k: float(v) for k, v in m.prefixed("recovery.").items()}

    names, failures = _calibrate_names(disc, quotes, vols, ratings, kappa)
    if failures:
        raise ValidationError("; ".join(failures))
    ordered = tuple(names[k] for k in loadings.names)
    structure = build_structure(sigma_m, loadings)
    parties = PartyConfig(rec.get(cp, quotes[cp].recovery), rec.get(inv, quotes[inv].recovery),
                          ratings.get(cp), ratings.get(inv))
    deals = resolve_par_spreads(deals, names, disc)
    horizon = max(d.maturity for d in deals) if deals else 1.0
    if not step > 0.0:
        raise ValidationError("time_step must be positive")
    grid = quarterly_grid(horizon, int(round(1.0 / step)))
    config = CvaRunConfig(n, grid, mode, netting, seed, kappa, trigger, tm if trigger else None, threads)
    return config, CvaInputs(ordered, structure, disc, parties), deals


def cmd_cva(m: RunManifest) -> int:
    config, inputs, deals = _cva_setup(m)
    out = _out_dir(m)
    try:
        report = run(config, inputs, deals)
    except (ComputationError, RuntimeError, FloatingPointError) as exc:
        log.error("engine failed: %s", exc)
        return EXIT_COMPUTATION
    echo = {"scenarios": config.n_scenarios, "seed": config.seed, "mode": config.mode,
            "netting": "on" if config.netting else "off", "kappa": config.kappa,
            "buckets": config.grid.size - 1, "threads": config.threads,
            "trigger_rating": config.trigger_rating or "none"}
    head = _header(m, echo)
    (out / "cva_summary.txt").write_text(head + report.to_text())
    rows = [",".join(report.PROFILE_HEADER)] + [",".join(map(str, r)) for r in report.profile_rows()]
    (out / "cva_profile.csv").write_text(head + "\n".join(rows) + "\n")
    print(report.to_text().split("\n\n")[0])
    return EXIT_OK


def _parse_targets(spec: str):
    out = []
    for item in spec.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        if len(parts) != 3:
            raise ValidationError(f"default_corr.target entries are rating:rho:target, got {item!r}")
        try:
            out.append((parts[0], float(parts[1]), float(parts[2])))
        except ValueError:
            raise ValidationError(f"bad number in {item!r}") from None
    return out


def cmd_default_corr(m: RunManifest) -> int:
    rhos = _list(m.get("default_corr.rho", "0.3"), float)
    horizons = _list(m.get("default_corr.horizons", "1"), float)
    pairs = [tuple(p.split(":")) if ":" in p else (p, p) for p in _list(m.get("default_corr.pairs", ""))]
    targets = _parse_targets(m.get("default_corr.target", ""))
    n = m.number("default_corr.scenarios", 1_000_000, int)
    seed = m.number("seed", 0, int)
    curves = {}
    needed = sorted({r for p in pairs for r in p})
    if needed:
        disc = load_discount_curve(m.file("discount"))
        for r in needed:
            curves[r] = bootstrap_pd_curve(load_cds_quotes(m.file(f"default_corr.quotes.{r}"), r), disc)
    out = _out_dir(m)
    head = _header(m, {"seed": seed, "scenarios": n})

    rows = ["rating_1,rating_2,rho,horizon,p1,p2,analytic,simulated,se,status"]
    for r1, r2 in pairs:
        for rho in rhos:
            for h in horizons:
                p1, p2 = float(curves[r1].pd(h)), float(curves[r2].pd(h))
                try:
                    a = default_correlation_analytic(p1, p2, rho)
                    est = simulate_default_correlation(p1, p2, rho, n, seed)
                    rows.append(f"{r1},{r2},{rho!r},{h!r},{p1!r},{p2!r},{a!r},{est.value!r},{est.se!r},ok")
                except DtdCvaError as exc:
                    rows.append(f"{r1},{r2},{rho!r},{h!r},{p1!r},{p2!r},,,,{exc}")
    (out / "default_corr.csv").write_text(head + "\n".join(rows) + "\n")

    trows = ["rating,rho,target,fitted_pd,analytic,simulated,se,status"]
    for rating, rho, target in targets:
        try:
            pd = fit_pd_for_default_correlation(target, rho)
            a = default_correlation_analytic(pd, pd, rho)
            est = simulate_default_correlation(pd, pd, rho, n, seed)
            trows.append(f"{rating},{rho!r},{target!r},{pd!r},{a!r},{est.value!r},{est.se!r},ok")
        except DtdCvaError as exc:
            trows.append(f"{rating},{rho!r},{target!r},,,,,{exc}")
    (out / "default_corr_table.csv").write_text(head + "\n".join(trows) + "\n")
    print("\n".join(trows))
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "cva": cmd_cva, "default-corr": cmd_default_corr}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtdcva", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", required=True, help="key = value run manifest")
        sp.add_argument("--scenarios", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=("conditional", "unconditional"))
        sp.add_argument("--netting", choices=("on", "off"))
        sp.add_argument("--out", help="output directory (default from manifest)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        m = RunManifest.read(args.manifest)
        _apply_overrides(m, args)
        return COMMANDS[args.command](m)
    except ValidationError as exc:
        log.error("validation failed: %s", exc)
        return EXIT_VALIDATION
    except DtdCvaError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION if isinstance(exc, ValueError) else EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
