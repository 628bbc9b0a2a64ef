"""Command line pipeline: ``esrn {clean,split,evolve,bench,synth}``.

Settings come from an optional JSON run config (``--config``) with command
line flags layered on top.  Every subcommand writes its outputs plus a
``manifest.json`` that echoes the effective config, seeds, library versions
and row counts.  Nothing time-dependent goes into any output, so equal
manifests mean byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import dataset as ds
from . import models as mdl
from .dimensional import candidate_set
from .evolution import EsrnConfig, read_exponents, run, sample_env
from .expression import simplify
from .metrics import DR_BIN_LABELS, report
from .network import SymbolicNetwork, decode, predict_dl, target_values
from .split import ssmd_split

# Observed min/max of each feature in the reference database.
DEFAULT_RANGES = {
    "w": (0.2, 867.0),
    "d": (0.03, 19.94),
    "U": (0.03, 1.74),
    "Ustar": (0.002, 0.553),
}


@dataclass
class SynthSpec:
    formula: str = "esrn_final"
    n: int = 500
    noise: float = 0.05
    seed: int = 0
    ranges: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_RANGES.items()})


@dataclass
class RunConfig:
    input: Optional[str] = None
    output_dir: str = "out"
    iqr_columns: list = field(default_factory=lambda: list(ds.COLUMNS))
    iqr_k: float = 1.5
    split_fraction: float = 0.7
    split_seed: int = 0
    train: Optional[str] = None
    test: Optional[str] = None
    esrn: dict = field(default_factory=lambda: EsrnConfig().to_dict())
    snap_tol: float = 0.05
    best_generation: Optional[int] = None
    models: list = field(default_factory=lambda: ["all"])
    network: Optional[str] = None
    synth: SynthSpec = field(default_factory=SynthSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        if "synth" in kw:
            kw["synth"] = SynthSpec(**kw["synth"])
        if "esrn" in kw:
            kw["esrn"] = EsrnConfig.from_dict({**EsrnConfig().to_dict(), **kw["esrn"]}).to_dict()
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


class CliError(Exception):
    pass


# -- helpers ----------------------------------------------------------------------

def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "esrn": __version__,
        "python": ".".join(map(str, sys.version_info[:3])),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_manifest(out: Path, command: str, cfg: RunConfig, **extra) -> dict:
    manifest = {"command": command, "config": cfg.to_dict(), "versions": _versions(), **extra}
    _write_json(out / "manifest.json", manifest)
    return manifest


def _rows_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path: Optional[str], what: str, require_target: bool = True) -> list:
    if not path:
        raise CliError(f"no {what} file given")
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} file not found: {p}")
    return ds.read_csv(p, require_target=require_target)


# -- subcommands ------------------------------------------------------------------------

def cmd_clean(cfg: RunConfig) -> dict:
    raw = _load(cfg.input, "input", require_target=False)
    out = _out_dir(cfg)
    cleaned = ds.clean(raw)
    filtered = ds.filter_outliers(cleaned, tuple(cfg.iqr_columns), cfg.iqr_k)
    if not filtered:
        raise CliError("no samples left after cleaning")
    counts = {"parsed": len(raw), "complete_unique": len(cleaned), "after_iqr": len(filtered)}
    ds.write_csv(out / "cleaned.csv", filtered)
    stats = ds.stats_to_json(ds.summarize(filtered))
    spear = None
    if len(filtered) >= 3:
        res = ds.spearman_matrix(filtered)
        spear = {
            "columns": list(res.columns),
            "matrix": np.asarray(res.matrix).tolist(),
            "undefined": [list(p) for p in res.undefined],
        }
        (out / "spearman.csv").write_text(_rows_csv(
            ["column"] + list(res.columns),
            ([c] + [float(v) for v in row] for c, row in zip(res.columns, np.asarray(res.matrix))),
        ))
    _write_json(out / "stats.json", {"counts": counts, "columns": stats, "spearman": spear})
    _write_manifest(out, "clean", cfg, counts=counts)
    return counts


def cmd_split(cfg: RunConfig) -> dict:
    samples = _load(cfg.input, "input")
    out = _out_dir(cfg)
    split = ssmd_split(samples, cfg.split_fraction, cfg.split_seed)
    ds.write_csv(out / "train.csv", split.train)
    ds.write_csv(out / "test.csv", split.test)
    counts = {"n": len(samples), "train": len(split.train), "test": len(split.test)}
    _write_manifest(out, "split", cfg, counts=counts, split=split.manifest())
    return counts


def cmd_evolve(cfg: RunConfig, progress=None) -> dict:
    train = _load(cfg.train, "train")
    test = _load(cfg.test, "test")
    out = _out_dir(cfg)
    config = EsrnConfig.from_dict(cfg.esrn)
    result = run(config, train, test, candidate_set(), cfg.snap_tol, progress)
    log = result.log
    gen = result.best_generation
    net = result.network
    env = sample_env(train)
    if cfg.best_generation is not None:
        if not 1 <= cfg.best_generation <= len(log):
            raise CliError(f"best_generation must lie in [1, {len(log)}]")
        gen = cfg.best_generation
        net = SymbolicNetwork.from_json(log.records[gen - 1].network)
        result.expression = decode(net)
        result.simplified = simplify(result.expression, cfg.snap_tol, env=env, target=target_values(net, env))
        result.readout = read_exponents(result.simplified, net.output, env)
    c, exps, method = result.readout
    lines = [
        f"{net.output.name} = {result.expression.to_text()}",
        f"{net.output.name} = {result.simplified.to_text()}",
    ]
    terms = "*".join(f"{v}^{_fmt(p)}" for v, p in exps.items() if p != 0)
    power_law = f"Dl = {c:.6g}*{terms}" if terms else f"Dl = {c:.6g}"
    lines.append(power_law if method == "symbolic" else f"{power_law}  (log-log fit on training rows)")
    (out / "best_expression.txt").write_text("\n".join(lines) + "\n")
    _write_json(out / "network.json", net.to_json())
    _write_json(out / "expression.json", {
        "output": net.output.to_json(),
        "raw": result.expression.to_json(),
        "simplified": result.simplified.to_json(),
        "dimensional": {"constant": c, "exponents": exps, "method": method},
    })
    (out / "generations.csv").write_text(log.to_csv())
    _write_json(out / "generations.json", log.to_json())
    summary = {
        "best_generation": gen,
        "selected_by": "cli" if cfg.best_generation is not None else "max test metric, earliest",
        "plateau": list(result.plateau),
        "train_metric": log.records[gen - 1].train,
        "test_metric": log.records[gen - 1].test,
        "loss": "log-space MSE for exp outputs, raw MSE otherwise",
    }
    _write_manifest(out, "evolve", cfg, counts={"train": len(train), "test": len(test),
                                                  "generations": len(log)}, result=summary)
    return summary


def _fmt(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else f"{p:.4g}"


def cmd_bench(cfg: RunConfig) -> dict:
    samples = _load(cfg.input, "data")
    out = _out_dir(cfg)
    ids = mdl.resolve(cfg.models) if cfg.models else []
    cols = ds.to_columns(samples)
    obs = cols["Dl"]
    preds = {mid: mdl.predict_arrays(mid, cols["w"], cols["d"], cols["U"], cols["Ustar"]) for mid in ids}
    if cfg.network:
        net = SymbolicNetwork.from_json(json.loads(Path(cfg.network).read_text()))
        preds["esrn_network"] = predict_dl(net, cols)
    if not preds:
        raise CliError("nothing to benchmark")
    reports = {name: report(obs, p) for name, p in preds.items()}
    _write_json(out / "eval_report.json", {name: r.to_dict() for name, r in reports.items()})
    (out / "taylor.csv").write_text(_rows_csv(
        ["model", "std", "correlation", "centered_rms"],
        ([name, r.taylor.pred_std, r.taylor.correlation, r.taylor.centered_rms] for name, r in reports.items()),
    ) if reports else "")
    (out / "dr_hist.csv").write_text(_rows_csv(
        ["model"] + list(DR_BIN_LABELS) + ["accuracy_pct"],
        ([name] + list(r.dr_bins) + [r.accuracy_pct] for name, r in reports.items()),
    ))
    (out / "predictions.csv").write_text(_rows_csv(
        ["sample", "model", "Dl_pred"],
        ([i, name, float(v)] for name, p in preds.items() for i, v in enumerate(p)),
    ))
    _write_json(out / "catalog.json", mdl.catalog_json(ids))
    ranking = sorted(reports, key=lambda k: -reports[k].r2 if np.isfinite(reports[k].r2) else np.inf)
    obs_std = next(iter(reports.values())).taylor.obs_std
    _write_manifest(out, "bench", cfg, counts={"samples": len(samples), "models": len(preds)},
                    observed_std=obs_std, ranking_by_r2=ranking)
    return {"ranking": ranking}


def synthesize(spec: SynthSpec) -> list:
    """Log-uniform features within ``spec.ranges`` and ``Dl`` from a catalog
    formula times ``exp(N(0, noise))``."""
    if spec.formula not in mdl.CATALOG:
        raise CliError(f"unknown formula {spec.formula!r}")
    if spec.n < 1 or spec.noise < 0:
        raise CliError("n must be positive and noise non-negative")
    rng = np.random.default_rng(spec.seed)
    feats = {}
    for name in ds.FEATURES:
        lo, hi = spec.ranges[name]
        if not 0 < lo <= hi:
            raise CliError(f"bad range for {name}: {lo}..{hi}")
        feats[name] = np.exp(rng.uniform(np.log(lo), np.log(hi), spec.n))
        feats[name] = np.clip(feats[name], lo, hi)
    dl = mdl.predict_arrays(spec.formula, feats["w"], feats["d"], feats["U"], feats["Ustar"])
    if spec.noise > 0:
        dl = dl * np.exp(rng.normal(0.0, spec.noise, spec.n))
    return ds.from_arrays(feats["w"], feats["d"], feats["U"], feats["Ustar"], dl)


def cmd_synth(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    samples = synthesize(cfg.synth)
    ds.write_csv(out / "synthetic.csv", samples)
    _write_manifest(out, "synth", cfg, counts={"rows": len(samples)},
                    noise_model="Dl * exp(N(0, noise))", sampling="log-uniform within ranges")
    return {"rows": len(samples)}


# -- argument parsing ------------------------------------------------------------------------

def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esrn", description="Evolutionary symbolic regression for river dispersion")
    parser.add_argument("--config", type=Path, help="JSON run config; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="drop incomplete/duplicate rows and IQR outliers")
    p.add_argument("--input")
    p.add_argument("--output-dir")
    p.add_argument("--iqr-columns", type=_csv_list)
    p.add_argument("--iqr-k", type=float)

    p = sub.add_parser("split", help="max-dissimilarity train/test split")
    p.add_argument("--input")
    p.add_argument("--output-dir")
    p.add_argument("--fraction", type=float, dest="split_fraction")
    p.add_argument("--seed", type=int, dest="split_seed")

    p = sub.add_parser("evolve", help="run the evolutionary search")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--output-dir")
    p.add_argument("--pop", type=int, dest="N")
    p.add_argument("--gens", type=int, dest="T")
    p.add_argument("--topology", type=lambda s: [int(x) for x in _csv_list(s)])
    p.add_argument("--metric")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--crossover-rate", type=float)
    p.add_argument("--activation-rate", type=float)
    p.add_argument("--candidate-rate", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--snap-tol", type=float)
    p.add_argument("--best-generation", type=int, help="override the automatic generation choice")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("bench", help="score catalog models (and an evolved network) on data")
    p.add_argument("--data", dest="input")
    p.add_argument("--models", type=_csv_list)
    p.add_argument("--network")
    p.add_argument("--output-dir")

    p = sub.add_parser("synth", help="generate a synthetic dataset from a catalog formula")
    p.add_argument("--formula")
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    return parser


_ESRN_FLAGS = ("N", "T", "topology", "metric", "seed", "epochs", "lr", "crossover_rate",
               "activation_rate", "candidate_rate", "workers")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command", "quiet")}
    if args.command == "synth":
        for key in ("formula", "n", "noise", "seed"):
            if key in given:
                setattr(cfg.synth, key, given.pop(key))
    if args.command == "evolve":
        esrn = dict(cfg.esrn)
        for key in _ESRN_FLAGS:
            if key in given:
                esrn[key] = given.pop(key)
        cfg.esrn = EsrnConfig.from_dict(esrn).to_dict()
    for key, value in given.items():
        setattr(cfg, key, value)
    return cfg


COMMANDS = {"clean": cmd_clean, "split": cmd_split, "evolve": cmd_evolve, "bench": cmd_bench, "synth": cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "evolve" and not args.quiet:
            def progress(r):
                print(f"generation {r.generation}: train {r.train:.6f} test {r.test:.6f}", file=sys.stderr)

            result = cmd_evolve(cfg, progress)
        else:
            result = COMMANDS[args.command](cfg)
    except (CliError, ds.DataError, ValueError, OSError) as exc:
        print(f"esrn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
