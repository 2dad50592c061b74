"""Command line front end: ``synflow analyze | partition | synth | validate``.

Exit codes: 0 success, 2 validation failure, 3 input error, 4 configuration
error. Failures print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__, synthetic, validation
from .data import read_csv, standardize, write_csv
from .exceptions import ConfigError, InputError, SynflowError
from .network import best_cut, dendrogram
from .partition import MERGE_TOL, TIE_RTOL, best_partition
from .regression import ModelSpec
from .synergy import SynergyMatrix, max_threads, psi_matrix, psi_pvalues

EXIT_OK = 0
EXIT_VALIDATION = 2

SIGNIFICANCE_MODES = ("off", "analytic", "surrogate")
PARTITION_MODES = ("auto", "exhaustive", "greedy")


# --- configuration ----------------------------------------------------------------


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _n_lambda(value):
    """``3`` is a component count, ``0.9`` a variance fraction."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return value
    text = str(value)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"n_lambda must be a count or a fraction, got {value!r}") from None


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class RunConfig:
    """Settings of one analysis run; every field can come from a file or a flag."""

    input: str = ""
    m: int = 1
    kernel: str = "linear"
    regularization: str = "ridge-gcv"
    n_lambda: float = 0.95
    partition_mode: str = "auto"
    significance: str = "off"
    surrogates: int = 100
    seed: int = 0
    output: str = "."
    alpha: float = 0.05
    mask: bool = False
    tie_rtol: float = TIE_RTOL
    merge_tol: float = MERGE_TOL
    component_past: bool = False

    def __post_init__(self):
        if self.significance not in SIGNIFICANCE_MODES:
            raise ConfigError(f"significance must be one of {SIGNIFICANCE_MODES}")
        if self.partition_mode not in PARTITION_MODES:
            raise ConfigError(f"partition_mode must be one of {PARTITION_MODES}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if self.surrogates < 1:
            raise ConfigError("surrogates must be positive")
        if self.tie_rtol < 0 or self.merge_tol < 0:
            raise ConfigError("tolerances must be nonnegative")
        self.model_spec()  # validates m, kernel and regularization

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(kinds)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        conv = {"int": int, "float": float, "str": str, "bool": _bool}
        values = {}
        for key, raw in mapping.items():
            try:
                if key == "n_lambda":
                    values[key] = _n_lambda(raw)
                else:
                    values[key] = conv[kinds[key]](raw)
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**values)

    def model_spec(self) -> ModelSpec:
        return ModelSpec.parse(self.m, self.kernel, self.regularization)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of the settings that determine results (paths excluded)."""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("input", "output")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# --- output helpers ---------------------------------------------------------------


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_matrix(path: Path, labels, M, config_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(labels))
        for lab, row in zip(labels, np.asarray(M)):
            w.writerow([lab] + [repr(float(v)) for v in row])


def _write_strengths(path: Path, res: SynergyMatrix, config_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "strength_r", "strength_s"])
        for lab, r, s in zip(res.labels, res.strengths_r, res.strengths_s):
            w.writerow([lab, repr(float(r)), repr(float(s))])


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    return {
        "synflow": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _decisions(cfg: RunConfig, res: SynergyMatrix) -> dict:
    return {
        "standardized": True,
        "target_past_included": "always for column targets; for component targets only if component_past",
        "component_past": cfg.component_past,
        "epsilon": "in-sample mean squared residual",
        "regularization": cfg.regularization,
        "ridge_lambda_per_component": [float(v) for v in res.lambdas],
        "ridge_selection": "generalized cross-validation on the full model, reused for sub-models",
        "n_lambda": cfg.n_lambda,
        "n_components": res.n_lambda,
        "psi_form": "symmetric three-term form",
        "psi_masking": cfg.mask,
        "aggregation": "average over subjects, then split",
        "linkage": "average linkage on max(w) - w, smallest id pair wins ties",
        "modularity_matrix": "psi_r",
        "threads": max_threads(),
    }


def _load(path):
    try:
        ts = read_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return standardize(ts)


def _write_analysis(out: Path, cfg: RunConfig, res: SynergyMatrix, meta: dict) -> None:
    h = cfg.hash()
    out.mkdir(parents=True, exist_ok=True)
    dend = dendrogram(res.psi_r, res.labels)
    cut = best_cut(dend, res.psi_r)
    _dump_json(out / "psi.json", {"config_hash": h, **res.to_dict()})
    _write_matrix(out / "psi.csv", res.labels, res.psi, h)
    _write_matrix(out / "psi_r.csv", res.labels, res.psi_r, h)
    _write_matrix(out / "psi_s.csv", res.labels, res.psi_s, h)
    _write_strengths(out / "strengths.csv", res, h)
    (out / "dendrogram.newick").write_text(dend.to_newick(f"config_hash={h}") + "\n", encoding="utf-8")
    _dump_json(out / "communities.json", {
        "config_hash": h,
        "modularity": cut.modularity,
        "cut_height": cut.height if np.isfinite(cut.height) else None,
        "communities": cut.to_dict(),
    })
    _dump_json(out / "run_metadata.json", {
        "config_hash": h,
        "config": cfg.to_dict(),
        "versions": _versions(),
        "decisions": _decisions(cfg, res),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **meta,
    })


def _analyze_one(ts, cfg: RunConfig):
    spec = cfg.model_spec()
    res = psi_matrix(ts, cfg.n_lambda, spec, target_past=cfg.component_past)
    pvalues = None
    if cfg.significance != "off":
        pvalues = psi_pvalues(ts, res, cfg.significance, cfg.surrogates, cfg.seed)
    return res, pvalues


def cmd_analyze(cfg: RunConfig, multi: str | None = None) -> int:
    out = Path(cfg.output)
    if multi is None:
        if not cfg.input:
            raise ConfigError("analyze needs an input CSV (or --multi DIR)")
        ts = _load(cfg.input)
        res, pvalues = _analyze_one(ts, cfg)
        if pvalues is not None and cfg.mask:
            res = res.masked(pvalues, cfg.alpha)
        meta = {"inputs": [{"path": cfg.input, "sha256": _sha256(cfg.input)}]}
        if pvalues is not None:
            meta["pvalues"] = pvalues.tolist()
        _write_analysis(out, cfg, res, meta)
        return EXIT_OK
    files = sorted(Path(multi).glob("*.csv"))
    if not files:
        raise InputError(f"no CSV files in {multi}")
    labels, mats, lambdas, k = None, [], [], []
    for f in files:
        ts = _load(f)
        if labels is None:
            labels = ts.labels
        elif ts.labels != labels:
            raise InputError(f"{f.name}: labels differ from {files[0].name}")
        res, pvalues = _analyze_one(ts, cfg)
        if pvalues is not None and cfg.mask:
            res = res.masked(pvalues, cfg.alpha)
        mats.append(res.psi)
        lambdas.extend(res.lambdas)
        k.append(res.n_lambda)
    # average first, then split
    mean = SynergyMatrix.from_psi(labels, np.mean(mats, axis=0), n_lambda=int(np.median(k)),
                                  lambdas=tuple(lambdas), spec=cfg.model_spec(), target_past=cfg.component_past)
    meta = {
        "inputs": [{"path": str(f), "sha256": _sha256(f)} for f in files],
        "components_per_input": k,
    }
    _write_analysis(out, cfg, mean, meta)
    return EXIT_OK


def cmd_partition(cfg: RunConfig, target: str) -> int:
    if not cfg.input:
        raise ConfigError("partition needs an input CSV")
    ts = _load(cfg.input)
    result = best_partition(ts, ts.index(target), cfg.model_spec(), mode=cfg.partition_mode,
                            tie_rtol=cfg.tie_rtol, merge_tol=cfg.merge_tol)
    report = {
        **result.to_dict(ts.labels),
        "config_hash": cfg.hash(),
        "requested_mode": cfg.partition_mode,
        "tie_rtol": cfg.tie_rtol,
        "merge_tol": cfg.merge_tol,
        "standardized": True,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if cfg.output in ("", "-"):
        sys.stdout.write(text)
    else:
        path = Path(cfg.output)
        if path.is_dir():
            path = path / "partition.json"
        path.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_synth(mapping: dict, output: str) -> int:
    gspec = synthetic.GeneratorSpec.from_mapping(mapping)
    ts = gspec.generate()
    payload = {"family": gspec.family, "T": gspec.T, "seed": gspec.seed, "params": gspec.params}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]
    comment = f"config_hash={digest} " + json.dumps(payload, sort_keys=True)
    if output in ("", "-"):
        sys.stdout.write(f"# {comment}\n")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(ts.labels)
        w.writerows([repr(float(v)) for v in row] for row in ts.values)
    else:
        write_csv(ts, output, comment=comment)
    return EXIT_OK


def cmd_validate(seed: int, runs: int, only, overrides, output: str | None) -> int:
    report = validation.run_suite(seed=seed, runs=runs, only=only, overrides=overrides)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for c in report.checks:
        state = "INCONCLUSIVE" if c.passed is None else ("PASS" if c.passed else "FAIL")
        print(f"{state:12s} {c.name} ({c.seconds:.1f}s)", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VALIDATION


# --- argument parsing ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _model_flags(p):
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("-m", "--order", dest="m", type=int, help="model order (lags per variable)")
    p.add_argument("--kernel", help="linear | poly:P | gaussian[:WIDTH]")
    p.add_argument("--regularization", help="none | ridge:LAMBDA | ridge-gcv")
    p.add_argument("--seed", type=int, help="seed for surrogate tests")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synflow", description="Redundancy and synergy analysis of multivariate time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="synergy matrix, network summary and metadata")
    p.add_argument("input", nargs="?", help="CSV file (header row of labels)")
    p.add_argument("--multi", metavar="DIR", help="average the synergy matrix over every CSV in DIR")
    _model_flags(p)
    p.add_argument("--n-lambda", dest="n_lambda", help="component count (int) or explained-variance fraction")
    p.add_argument("--significance", choices=SIGNIFICANCE_MODES)
    p.add_argument("--surrogates", type=int, help="surrogate count for --significance surrogate")
    p.add_argument("--alpha", type=float, help="significance level used by --mask")
    p.add_argument("--mask", action="store_true", default=None, help="zero non-significant entries before the split")
    p.add_argument("--component-past", dest="component_past", action="store_true", default=None,
                   help="add each component's own lags to its models (needs ridge)")
    p.add_argument("-o", "--out", dest="output", help="output directory")

    p = sub.add_parser("partition", help="redundancy partition of the drivers of one target")
    p.add_argument("input", nargs="?", help="CSV file")
    p.add_argument("--target", required=True, help="label of the target variable")
    _model_flags(p)
    p.add_argument("--mode", dest="partition_mode", choices=PARTITION_MODES)
    p.add_argument("--tie-rtol", dest="tie_rtol", type=float, help="relative tolerance for equal totals")
    p.add_argument("--merge-tol", dest="merge_tol", type=float, help="minimum gain for a greedy merge")
    p.add_argument("-o", "--out", dest="output", help="report path or directory (stdout if omitted)")

    p = sub.add_parser("synth", help="write a synthetic example system as CSV")
    p.add_argument("--config", help="key = value generator file")
    p.add_argument("--family", choices=synthetic.FAMILIES)
    p.add_argument("-T", "--length", dest="T", type=int, help="number of samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="family parameter such as a=0.4, rho=1 or n=5 (repeatable)")
    p.add_argument("-o", "--out", dest="output", default="-", help="CSV path (stdout if omitted)")

    p = sub.add_parser("validate", help="rerun the reference oracle suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=100, help="repetitions per statistical check")
    p.add_argument("--only", action="append", choices=list(validation.CHECKS), help="run only this check (repeatable)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="NAME=VALUE",
                   help="replace a reference constant (for sensitivity checks)")
    p.add_argument("-o", "--out", dest="output", help="JSON report path (stdout if omitted)")
    return parser


def _pairs(items, what) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"{what} must look like KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _run_config(args) -> RunConfig:
    mapping = parse_config_file(args.config) if getattr(args, "config", None) else {}
    names = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if key in names and value is not None:
            mapping[key] = value
    return RunConfig.from_mapping(mapping)


def dispatch(args) -> int:
    if args.command == "analyze":
        return cmd_analyze(_run_config(args), multi=args.multi)
    if args.command == "partition":
        cfg = _run_config(args)
        if args.output is None:
            cfg = RunConfig.from_mapping({**cfg.to_dict(), "output": "-"})
        return cmd_partition(cfg, args.target)
    if args.command == "synth":
        mapping = parse_config_file(args.config) if args.config else {}
        for key in ("family", "T", "seed"):
            if getattr(args, key) is not None:
                mapping[key] = getattr(args, key)
        mapping.update(_pairs(args.param, "--param"))
        return cmd_synth(mapping, args.output)
    overrides = {}
    for key, value in _pairs(args.overrides, "--set").items():
        if key not in validation.TARGETS:
            raise ConfigError(f"unknown reference constant {key!r}")
        try:
            overrides[key] = float(value)
        except ValueError:
            raise ConfigError(f"--set {key}: {value!r} is not a number") from None
    if args.runs < 1:
        raise ConfigError("--runs must be positive")
    return cmd_validate(args.seed, args.runs, args.only, overrides, args.output)


def _error_record(exc: Exception, code: int) -> str:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("name", "label"):
        if hasattr(exc, attr):
            record[attr] = getattr(exc, attr)
    return json.dumps(record, sort_keys=True)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return dispatch(args)
    except SynflowError as exc:
        return _fail(exc, exc.exit_code)
    except OSError as exc:
        return _fail(exc, InputError.exit_code)


def _fail(exc, code) -> int:
    print(_error_record(exc, code), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
