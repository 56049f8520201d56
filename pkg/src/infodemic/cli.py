"""Batch front-end: ``infodemic {ingest,fit,rolling,countries,ccf,sdc,all,fetch,fixture}``.

Every output is a CSV/text/JSON file that starts with a metadata header; a
``manifest.json`` sidecar lists outputs, their hashes and any failures.
Settings come from defaults, then ``--config`` (JSON), then command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, specs
from .analysis import (
    difference_frame,
    get_model,
    lollipop_frame,
    per_country_fit,
    rolling_elasticity,
    scatter_frame,
    taxonomy,
)
from .corr import ccf, sdc
from .ingest import IngestError, Sources, build_panel, fetch, load_column_config
from .regress import fixed_effects_fit, format_table, panel_design, vif
from .synthetic import write_fixture
from .timeseries import DateRange, Series, crop, rolling_mean

logger = logging.getLogger("infodemic")

DATA_DIR_ENV = "INFODEMIC_DATA_DIR"
DEFAULT_FILES = {
    "who": "WHO-COVID-19-global-data.csv",
    "ears": "ears.csv",
    "oxcgrt": "OxCGRT_compact_national_v1.csv",
    "trends": "trends",
}
ALL_MODELS = ["1a", "1b", "1c", "1d", "2a", "2b", "2c"]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    data_paths: dict = field(default_factory=dict)
    output_dir: str = "out"
    models: list = field(default_factory=lambda: list(ALL_MODELS))
    seed: int = 0
    robust: str = "hc1"
    dependent: list = field(default_factory=lambda: ["documents", "trends"])
    rolling_window: str = "6m"
    rolling_step: str = "7d"
    ccf_max_lag: int = 25
    ccf_pair: str = "documents:cases"
    sdc_window: int = 70
    sdc_max_lag: int = 21
    sdc_pairs: list = field(default_factory=lambda: ["cases:documents", "cases:deaths"])
    alpha: float = 0.01
    n_perm: int = 1000
    countries: list | None = None
    smooth_correlation_inputs: bool = False
    columns: dict | str | None = None
    empty_as_zero: bool = False
    n_jobs: int = 1

    def reproducible(self) -> dict:
        """Effective settings minus the output location, which must not affect content."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d["data_paths"] = {k: str(v) for k, v in sorted(self.data_paths.items())}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.reproducible(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _default_paths() -> dict:
    root = os.environ.get(DATA_DIR_ENV)
    if not root:
        return {}
    return {k: str(Path(root) / v) for k, v in DEFAULT_FILES.items() if (Path(root) / v).exists()}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(data_paths=_default_paths())
    if getattr(args, "config", None):
        with open(args.config) as fh:
            user = json.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(user) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        paths = user.pop("data_paths", {})
        cfg = dataclasses.replace(cfg, **user)
        cfg.data_paths = {**cfg.data_paths, **paths}
    cmd = args.command
    flag_map = {
        "out": "output_dir",
        "seed": "seed",
        "robust": "robust",
        "alpha": "alpha",
        "n_perm": "n_perm",
        "step": "rolling_step",
        "n_jobs": "n_jobs",
    }
    for flag, key in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "models", None):
        cfg.models = [m.strip().lower().removeprefix("m") for m in args.models.split(",") if m.strip()]
    if getattr(args, "dependent", None):
        cfg.dependent = [args.dependent]
    if getattr(args, "pair", None):
        if cmd == "ccf":
            cfg.ccf_pair = args.pair
        else:
            cfg.sdc_pairs = [args.pair]
    if getattr(args, "window", None) is not None:
        if cmd == "sdc":
            cfg.sdc_window = int(args.window)
        else:
            cfg.rolling_window = args.window
    if getattr(args, "max_lag", None) is not None:
        if cmd in ("ccf", "all"):
            cfg.ccf_max_lag = args.max_lag
        if cmd in ("sdc", "all"):
            cfg.sdc_max_lag = args.max_lag
    if getattr(args, "countries", None):
        cfg.countries = [c.strip().upper() for c in args.countries.split(",")]
    if getattr(args, "smooth", False):
        cfg.smooth_correlation_inputs = True
    for key in ("who", "ears", "oxcgrt", "trends"):
        val = getattr(args, key, None)
        if val:
            cfg.data_paths[key] = val
    bad = [m for m in cfg.models if m not in ALL_MODELS]
    if bad:
        raise ConfigError(f"unknown models {bad}; choose from {ALL_MODELS}")
    if cfg.robust not in ("hc1", "cluster"):
        raise ConfigError("--robust must be hc1 or cluster")
    return cfg


def validate_paths(cfg: RunConfig, needed: list[str]):
    for key in needed:
        path = cfg.data_paths.get(key)
        if not path:
            raise ConfigError(f"no path configured for source '{key}'")
        if not Path(path).exists():
            raise FileNotFoundError(f"{key}: file not found: {path}")


def _fmt_float(x) -> str:
    return "%.10g" % x


class OutputWriter:
    """Writes outputs with a metadata header and records them for the manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}
        self.failures: list[dict] = []
        self.notes: dict = {}

    def header(self, date_range) -> list[str]:
        return [
            f"tool: infodemic {__version__}",
            f"config_hash: {self.cfg.config_hash()}",
            f"seed: {self.cfg.seed}",
            f"date_range: {date_range or 'n/a'}",
        ]

    def _write(self, name: str, body: str, date_range):
        text = "".join(f"# {line}\n" for line in self.header(date_range)) + body
        path = self.root / name
        path.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        logger.info("wrote %s", path)

    def frame(self, name: str, df: pd.DataFrame, date_range=None):
        buf = io.StringIO()
        df.to_csv(buf, index=False, float_format="%.10g", lineterminator="\n")
        self._write(name, buf.getvalue(), date_range)

    def text(self, name: str, body: str, date_range=None):
        self._write(name, body, date_range)

    def json(self, name: str, obj, date_range=None):
        body = json.dumps(obj, indent=2, default=_json_default) + "\n"
        self._write(name, body, date_range)

    def panel(self, name: str, panel):
        buf = io.StringIO()
        panel.to_long().to_csv(buf, index=False, float_format="%.12g", lineterminator="\n")
        self._write(name, buf.getvalue(), panel.date_range)

    def fail(self, analysis: str, exc: Exception):
        logger.error("%s failed: %s", analysis, exc)
        self.failures.append({"analysis": analysis, "error": f"{type(exc).__name__}: {exc}"})

    def manifest(self, command: str) -> dict:
        man = {
            "tool": f"infodemic {__version__}",
            "command": command,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg.reproducible(),
            "outputs": dict(sorted(self.files.items())),
            "failures": self.failures,
            "status": "ok" if not self.failures else "partial",
        }
        if self.notes:
            man["notes"] = self.notes
        (self.root / "manifest.json").write_text(json.dumps(man, indent=2, default=_json_default) + "\n")
        return man


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


class Context:
    """Lazily loaded sources and panels shared by subcommands of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._sources = None
        self._panels = {}

    @property
    def sources(self) -> Sources:
        if self._sources is None:
            validate_paths(self.cfg, ["who"])
            cols = self.cfg.columns
            if isinstance(cols, str):
                cols = load_column_config(cols)
            paths = {k: v for k, v in self.cfg.data_paths.items() if v}
            for key in ("ears", "oxcgrt", "trends"):
                if key in paths and not Path(paths[key]).exists():
                    raise FileNotFoundError(f"{key}: file not found: {paths[key]}")
            self._sources = Sources.load(paths, cols, empty_as_zero=self.cfg.empty_as_zero)
        return self._sources

    def panel(self, model_id: str):
        if model_id not in self._panels:
            spec = get_model(model_id)
            self._panels[model_id] = build_panel(spec, self.sources, countries=self.cfg.countries)
        return self._panels[model_id]

    def available_models(self) -> list[str]:
        src = self.sources
        out = []
        for m in self.cfg.models:
            spec = get_model(m)
            if spec.dependent == specs.TRENDS and not src.trends:
                continue
            if spec.dependent == specs.DOCUMENTS and not src.documents:
                continue
            if specs.VACCINATION in spec.regressors and not src.vaccinated:
                continue
            out.append(m)
        return out


def cmd_ingest(ctx: Context, out: OutputWriter):
    src = ctx.sources
    out.frame("source_summary.csv", pd.DataFrame(src.summary()))
    for m in ctx.available_models():
        try:
            out.panel(f"panel_{m}.csv", ctx.panel(m))
        except Exception as exc:  # noqa: BLE001 - recorded in the manifest
            out.fail(f"ingest:{m}", exc)


def _table_groups(models: list[str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for m in models:
        key = "table_documents_1d" if m == "1d" else f"table_{get_model(m).dependent}"
        groups.setdefault(key, []).append(m)
    return groups


def cmd_fit(ctx: Context, out: OutputWriter):
    fits = {}
    for m in ctx.available_models():
        try:
            spec = get_model(m)
            panel = ctx.panel(m)
            fit = fixed_effects_fit(panel, spec, ctx.cfg.robust)
            fit.vif = vif(panel_design(panel, spec), columns=list(spec.regressors))
            fits[m] = fit
        except Exception as exc:  # noqa: BLE001
            out.fail(f"fit:{m}", exc)
    for name, members in _table_groups(list(fits)).items():
        sub = {m: fits[m] for m in members}
        ranges = sorted({f.metadata.get("date_range", "") for f in sub.values()})
        out.text(f"{name}.txt", format_table(sub), "; ".join(ranges))
    if fits:
        out.json("fits.json", {m: f.to_dict() for m, f in fits.items()})
    return fits


def _rolling_spec(dependent: str):
    return get_model("2b") if dependent == specs.TRENDS else get_model("1b")


def cmd_rolling(ctx: Context, out: OutputWriter):
    names = {specs.DOCUMENTS: "rolling_documents.csv", specs.TRENDS: "rolling_trends.csv"}
    for dep in ctx.cfg.dependent:
        try:
            spec = _rolling_spec(dep)
            panel = ctx.panel(spec.id.value)
            traj = rolling_elasticity(
                panel, spec, ctx.cfg.rolling_window, ctx.cfg.rolling_step,
                cov_type=ctx.cfg.robust, n_jobs=ctx.cfg.n_jobs,
            )
            out.frame(names[dep], traj.to_frame(), panel.date_range)
        except Exception as exc:  # noqa: BLE001
            out.fail(f"rolling:{dep}", exc)


def cmd_countries(ctx: Context, out: OutputWriter):
    try:
        spec = get_model("1b")
        panel = ctx.panel("1b")
        results = per_country_fit(panel, spec, n_jobs=ctx.cfg.n_jobs)
        fitted = [r for r in results if r.ok]
        report = taxonomy(fitted)
        panel_fit = fixed_effects_fit(panel, spec, ctx.cfg.robust)
        out.frame("country_scatter.csv", scatter_frame(results), panel.date_range)
        out.frame("country_difference.csv", difference_frame(report), panel.date_range)
        out.frame("country_lollipop.csv", lollipop_frame(results, panel_fit), panel.date_range)
        out.notes["countries"] = {
            "mean_internal": report.mean_internal,
            "mean_external": report.mean_external,
            "outliers": report.outliers,
            "failed": {r.country: r.error for r in results if not r.ok},
            "quadrants": {q.value: v for q, v in report.members.items()},
        }
    except Exception as exc:  # noqa: BLE001
        out.fail("countries", exc)


def _raw(ctx: Context, name: str) -> dict[str, Series]:
    src = ctx.sources
    table = {
        specs.DOCUMENTS: src.documents,
        specs.CASES: src.cases,
        specs.DEATHS: src.deaths,
        specs.TRENDS: src.trends,
    }
    if name not in table:
        raise ConfigError(f"unknown series {name!r}; choose from {sorted(table)}")
    return table[name]


def _paired(ctx: Context, pair: str):
    """Yield (code, a, b) raw daily series cropped to their common span."""
    first, second = pair.split(":")
    sa, sb = _raw(ctx, first), _raw(ctx, second)
    codes = sorted(set(sa) & set(sb))
    if ctx.cfg.countries:
        codes = [c for c in codes if c in ctx.cfg.countries]
    if not codes:
        raise ConfigError(f"no countries with both {first} and {second}")
    for code in codes:
        a, b = sa[code], sb[code]
        if ctx.cfg.smooth_correlation_inputs:
            a, b = rolling_mean(a, 7), rolling_mean(b, 7)
        start = max(a.start_date, b.start_date)
        end = min(a.end_date, b.end_date)
        rng = DateRange(start, end)
        yield code, crop(a, rng), crop(b, rng)


def cmd_ccf(ctx: Context, out: OutputWriter):
    try:
        frames = []
        spans = set()
        for code, a, b in _paired(ctx, ctx.cfg.ccf_pair):
            frames.append(ccf(a, b, ctx.cfg.ccf_max_lag, country=code).to_frame())
            spans.add(str(a.date_range))
        out.frame("ccf.csv", pd.concat(frames, ignore_index=True), "; ".join(sorted(spans)))
    except Exception as exc:  # noqa: BLE001
        out.fail("ccf", exc)


def cmd_sdc(ctx: Context, out: OutputWriter):
    for pair in ctx.cfg.sdc_pairs:
        try:
            frames, spans = [], set()
            for code, a, b in _paired(ctx, pair):
                grid = sdc(
                    a, b, ctx.cfg.sdc_window, ctx.cfg.sdc_max_lag, ctx.cfg.alpha,
                    ctx.cfg.n_perm, seed=ctx.cfg.seed, country=code, n_jobs=ctx.cfg.n_jobs,
                )
                frames.append(grid.to_frame())
                spans.add(str(a.date_range))
            out.frame(
                f"sdc_{pair.replace(':', '_')}.csv",
                pd.concat(frames, ignore_index=True),
                "; ".join(sorted(spans)),
            )
        except Exception as exc:  # noqa: BLE001
            out.fail(f"sdc:{pair}", exc)


COMMANDS = {
    "ingest": [cmd_ingest],
    "fit": [cmd_fit],
    "rolling": [cmd_rolling],
    "countries": [cmd_countries],
    "ccf": [cmd_ccf],
    "sdc": [cmd_sdc],
    "all": [cmd_ingest, cmd_fit, cmd_rolling, cmd_countries, cmd_ccf, cmd_sdc],
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--robust", choices=["hc1", "cluster"])
    common.add_argument("--models", help="comma-separated model ids, e.g. 1a,1b,1c")
    common.add_argument("--window", help="rolling window (e.g. 6m) or SDC window size in days")
    common.add_argument("--step", help="rolling step (e.g. 7d)")
    common.add_argument("--max-lag", type=int, dest="max_lag")
    common.add_argument("--alpha", type=float)
    common.add_argument("--n-perm", type=int, dest="n_perm")
    common.add_argument("--dependent", choices=["documents", "trends"])
    common.add_argument("--pair", help="series pair for ccf/sdc, e.g. cases:documents")
    common.add_argument("--countries", help="comma-separated ISO alpha-2 codes")
    common.add_argument("--smooth", action="store_true", help="7-day mean before ccf/sdc")
    common.add_argument("--n-jobs", type=int, dest="n_jobs")
    for key in ("who", "ears", "oxcgrt"):
        common.add_argument(f"--{key}", help=f"{key} CSV path")
    common.add_argument("--trends", help="directory of <CODE>.csv Google Trends exports")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="infodemic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"infodemic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run {name}")
    fp = sub.add_parser("fetch", help="download archived WHO and OxCGRT files")
    fp.add_argument("dest")
    fx = sub.add_parser("fixture", help="write a synthetic dataset in the source layouts")
    fx.add_argument("dest")
    fx.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "fetch":
        for key, path in fetch(args.dest).items():
            print(f"{key}: {path}")
        return 0
    if args.command == "fixture":
        paths = write_fixture(args.dest, seed=args.seed)
        print(json.dumps({"data_paths": paths}, indent=2))
        return 0
    try:
        cfg = resolve_config(args)
        ctx = Context(cfg)
        ctx.sources  # fail fast on missing or malformed inputs
    except (ConfigError, FileNotFoundError, IngestError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = OutputWriter(cfg)
    for cmd in COMMANDS[args.command]:
        try:
            cmd(ctx, out)
        except Exception as exc:  # noqa: BLE001
            out.fail(cmd.__name__, exc)
    man = out.manifest(args.command)
    for f in man["failures"]:
        print(f"failed: {f['analysis']}: {f['error']}", file=sys.stderr)
    return 0 if not man["failures"] else 1


if __name__ == "__main__":
    sys.exit(main())
