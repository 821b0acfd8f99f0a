"""Experiment configs, persistence, and the run/analyze pipeline.

Configs are canonical JSON (sorted keys), hashed by sha256 over the physical
fields only, so a config hash identifies the experiment independently of
runtime knobs (threads, output paths).  Results are a newline-delimited text
table with a schema-version header line; floats are written with repr so runs
are byte-identical for a fixed config and seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fronts import FrontSpec, LimitConstants, constants
from .measures import Atoms, BranchingModel, Density, SphereShell, is_kato_and_compact
from .simulator import CapExceeded, EnsembleResult, run_ensemble
from .spectral import (SpectralData, SubcriticalModelError, principal_eigenvalue,
                       principal_eigenvalue_shell)
from . import stats as st

SCHEMA_VERSION = 1
RESULT_COLUMNS = ["rep", "t", "Z", "L", "R", "M", "Y", "extinct", "e0"]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines an experiment (and enters the config hash)."""

    model: dict
    x0: float
    horizon_t: float
    checkpoints_t: tuple[float, ...]
    dt: float
    replicates: int
    seed: int
    fronts: tuple[FrontSpec, ...] = ()
    population_cap: float = 1e7
    scheme: str = "bridge"

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicate count must be >= 1")
        if list(self.checkpoints_t) != sorted(self.checkpoints_t):
            raise ConfigError("checkpoints must be sorted")
        if self.checkpoints_t and self.checkpoints_t[-1] > self.horizon_t + 1e-12:
            raise ConfigError("checkpoints must not exceed the horizon")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.scheme not in ("bridge", "shell"):
            raise ConfigError("scheme must be 'bridge' or 'shell'")

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "model": self.model,
            "x0": self.x0,
            "horizon_t": self.horizon_t,
            "checkpoints_t": list(self.checkpoints_t),
            "dt": self.dt,
            "replicates": self.replicates,
            "seed": self.seed,
            "fronts": [f.to_dict() for f in self.fronts],
            "population_cap": self.population_cap,
            "scheme": self.scheme,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {d.get('schema')!r}")
        try:
            return ExperimentConfig(
                model=d["model"],
                x0=float(d["x0"]),
                horizon_t=float(d["horizon_t"]),
                checkpoints_t=tuple(float(t) for t in d["checkpoints_t"]),
                dt=float(d["dt"]),
                replicates=int(d["replicates"]),
                seed=int(d["seed"]),
                fronts=tuple(FrontSpec.from_dict(f) for f in d.get("fronts", [])),
                population_cap=float(d.get("population_cap", 1e7)),
                scheme=d.get("scheme", "bridge"),
            )
        except KeyError as e:
            raise ConfigError(f"missing config field {e.args[0]!r}") from None

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    @staticmethod
    def load(path: str | Path) -> "ExperimentConfig":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from None
        return ExperimentConfig.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# model construction and validation
# ---------------------------------------------------------------------------

def build_model(cfg: ExperimentConfig) -> BranchingModel:
    spec = cfg.model
    kind = spec.get("kind")
    try:
        if kind == "atoms":
            atoms = tuple((float(a["loc"]), float(a["weight"])) for a in spec["atoms"])
            p2 = tuple(float(a["p2"]) for a in spec["atoms"])
            return BranchingModel(Atoms(atoms), p2)
        if kind == "shell":
            return BranchingModel(
                SphereShell(int(spec.get("dim", 3)), float(spec["radius"]), float(spec["weight"])),
                float(spec["p2"]))
        if kind == "density":
            return BranchingModel(
                Density(int(spec.get("dim", 1)), spec.get("profile", "uniform"),
                        float(spec["amplitude"]), float(spec["r0"])),
                float(spec["p2"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad model spec: {e}") from None
    raise ConfigError(f"unknown model kind {kind!r}")


def build_spectral(model: BranchingModel) -> SpectralData:
    rate = model.rate
    if isinstance(rate, Atoms):
        return principal_eigenvalue(model.nu_atoms())
    if isinstance(rate, SphereShell):
        return principal_eigenvalue_shell(rate.radius, rate.beta, float(model.p2_values()[0]),
                                          d=rate.d)
    raise SubcriticalModelError(
        "no closed spectral route for the density family; use the FD oracle")


def build_constants(model: BranchingModel, sd: SpectralData) -> LimitConstants:
    rate = model.rate
    if isinstance(rate, Atoms):
        return constants(sd, model.nu_atoms())
    q = model.q_minus_one()[0]
    return constants(sd, q * rate.beta)


def validate_config(cfg: ExperimentConfig) -> dict:
    """Kato/compactness checks plus the spectral gate; raises ConfigError."""
    model = build_model(cfg)
    ok, kato_report = is_kato_and_compact(model.rate)
    if not ok:
        raise ConfigError("Kato report not decreasing in alpha")
    try:
        sd = build_spectral(model)
    except SubcriticalModelError as e:
        raise ConfigError(f"spectral gate failed: {e}") from None
    for f in cfg.fronts:
        f.validate(sd)
    est_peak = math.exp(-sd.lam * cfg.horizon_t) * float(sd.h(cfg.x0)) * sd.l1_norm()
    if est_peak > cfg.population_cap:
        raise ConfigError(
            f"expected peak population per replicate {est_peak:.3g} exceeds the cap "
            f"{cfg.population_cap:g}")
    return {"kato": kato_report, "spectral": sd.to_dict(),
            "expected_peak_per_replicate": est_peak}


# ---------------------------------------------------------------------------
# running and persisting
# ---------------------------------------------------------------------------

def _format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def write_results(path: Path, cfg: ExperimentConfig, ens: EnsembleResult) -> None:
    F = len(cfg.fronts)
    cols = RESULT_COLUMNS + [f"ZR{f}" for f in range(F)]
    with open(path, "w") as fh:
        fh.write(f"# bbmlab-results schema={SCHEMA_VERSION} config={cfg.config_hash}\n")
        fh.write("\t".join(cols) + "\n")
        for r in range(ens.n_replicates):
            for ci, t in enumerate(ens.checkpoints):
                row = [str(r), _format_float(float(t)), str(int(ens.Z[r, ci])),
                       _format_float(ens.L[r, ci]), _format_float(ens.R[r, ci]),
                       _format_float(ens.M[r, ci]), _format_float(ens.Y[r, ci]),
                       "1" if ens.Z[r, ci] == 0 else "0", _format_float(ens.e0[r])]
                row += [str(int(ens.ZR[r, ci, f])) for f in range(F)]
                fh.write("\t".join(row) + "\n")


def read_results(result_dir: str | Path):
    """Load (config, header, EnsembleResult) back from a result directory."""
    result_dir = Path(result_dir)
    header = json.loads((result_dir / "header.json").read_text())
    cfg = ExperimentConfig.from_dict(header["config"])
    path = result_dir / "results.tsv"
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# bbmlab-results"):
            raise ConfigError("results file missing schema header")
        fields = dict(kv.split("=") for kv in first.split()[2:])
        if int(fields["schema"]) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported results schema {fields['schema']}")
        if fields["config"] != cfg.config_hash:
            raise ConfigError("results/config hash mismatch")
        fh.readline()
        data = np.loadtxt(fh, delimiter="\t")
    if data.size == 0:
        raise ConfigError("no records in results file")
    data = np.atleast_2d(data)
    C = len(cfg.checkpoints_t)
    R = cfg.replicates
    F = len(cfg.fronts)
    if data.shape[0] != R * C:
        raise ConfigError("results file is incomplete")
    idx = (data[:, 0].astype(int), np.searchsorted(np.array(cfg.checkpoints_t), data[:, 1]))
    ens = EnsembleResult(
        checkpoints=np.array(cfg.checkpoints_t),
        front_values=np.array(header["front_values"]) if header.get("front_values") else np.zeros((C, F)),
        Z=np.zeros((R, C), dtype=np.int64), L=np.zeros((R, C)), R=np.zeros((R, C)),
        M=np.zeros((R, C)), Y=np.zeros((R, C)), ZR=np.zeros((R, C, F), dtype=np.int64),
        e0=np.full(R, np.nan), partial=bool(header.get("partial", False)), seed=cfg.seed)
    ens.Z[idx] = data[:, 2].astype(np.int64)
    ens.L[idx] = data[:, 3]
    ens.R[idx] = data[:, 4]
    ens.M[idx] = data[:, 5]
    ens.Y[idx] = data[:, 6]
    ens.e0[idx[0]] = data[:, 8]
    for f in range(F):
        ens.ZR[idx[0], idx[1], f] = data[:, 9 + f].astype(np.int64)
    return cfg, header, ens


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, threads: int = 1,
                   progress: bool = False) -> Path:
    """Validate, simulate, and persist one experiment; returns the directory.

    Partial results (population cap breach) are flagged in the header and the
    function raises CapExceeded after writing them.
    """
    report = validate_config(cfg)
    model = build_model(cfg)
    sd = build_spectral(model)
    consts = build_constants(model, sd)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ens = run_ensemble(model, cfg.x0, list(cfg.checkpoints_t), cfg.dt, cfg.replicates,
                       cfg.seed, spectral=sd, fronts=list(cfg.fronts), threads=threads,
                       cap=cfg.population_cap, scheme=cfg.scheme, progress=progress)

    header = {
        "schema": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash,
        "spectral": sd.to_dict(),
        "constants": consts.to_dict(),
        "fronts": [f.to_dict() for f in cfg.fronts],
        "front_values": ens.front_values.tolist(),
        "expected_peak_per_replicate": report["expected_peak_per_replicate"],
        "kato": {str(k): v for k, v in report["kato"]["sup_potential"].items()},
        "partial": ens.partial,
    }
    (out_dir / "header.json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    write_results(out_dir / "results.tsv", cfg, ens)
    if ens.partial:
        raise CapExceeded("population cap exceeded; partial results flagged in header")
    return out_dir


# ---------------------------------------------------------------------------
# analysis pipeline
# ---------------------------------------------------------------------------

class AnalysisError(RuntimeError):
    pass


def _write_plot(path: Path, xs, ys, config_hash: str, label: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# bbmlab-plot config={config_hash} kind={label}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{_format_float(float(x))} {_format_float(float(y))}\n")


def analyze(result_dir: str | Path, analysis_spec: dict, out_dir: str | Path | None = None) -> Path:
    """Run the named analyses over persisted results; emit CSV + plot data."""
    result_dir = Path(result_dir)
    out_dir = Path(out_dir) if out_dir is not None else result_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        cfg, header, ens = read_results(result_dir)
    except FileNotFoundError as e:
        raise AnalysisError(f"no records: {e}") from None
    if int(ens.Z.sum()) == 0 and not np.any(ens.Z > 0):
        raise AnalysisError("no records: every replicate is empty")

    model = build_model(cfg)
    sd = build_spectral(model)
    consts = build_constants(model, sd)
    verdict_rows = []

    for item in analysis_spec.get("analyses", []):
        kind = item.get("kind")
        if kind == "tail":
            fi = int(item.get("front", 0))
            if fi >= len(cfg.fronts):
                raise AnalysisError(f"tail analysis references missing front {fi}")
            front = cfg.fronts[fi]
            times = item.get("times", [t for t in cfg.checkpoints_t if t > 0])
            xs, ys = [], []
            for t in times:
                te = st.estimate_tail(ens, front, sd, consts, float(t), x0=cfg.x0)
                verdict_rows.append(["tail", f"t={te.t:g}",
                                     f"phat={te.phat:.6g}",
                                     f"wilson=[{te.wilson[0]:.6g},{te.wilson[1]:.6g}]",
                                     f"prediction={te.prediction:.6g}",
                                     f"ratio={te.ratio:.6g}",
                                     f"eta={te.eta_exact:.4g}",
                                     "graded" if te.graded else
                                     ("too-early" if te.regime_too_early else "informational")])
                xs.append(te.t)
                ys.append(te.ratio)
            _write_plot(out_dir / f"tail_front{fi}.dat", xs, ys, cfg.config_hash, "t_ratio")
        elif kind == "gumbel":
            t = float(item["t"])
            T_proxy = item.get("proxy_T", t / 2.0)
            if not any(abs(c - T_proxy) < 1e-9 for c in cfg.checkpoints_t):
                raise AnalysisError(
                    f"gumbel analysis needs the martingale checkpoint t={T_proxy:g}")
            fit = st.gumbel_mixture_test(ens, sd, consts, t, T_proxy=T_proxy)
            verdict_rows.append(["gumbel", f"t={fit.t:g}", f"D={fit.D:.6g}",
                                 f"noise_floor={fit.noise_floor:.6g}",
                                 f"proxy_T={fit.T_proxy:g}"])
            _write_plot(out_dir / f"gumbel_t{t:g}_ecdf.dat", fit.kappa_grid, fit.empirical,
                        cfg.config_hash, "kappa_ecdf")
            _write_plot(out_dir / f"gumbel_t{t:g}_mixture.dat", fit.kappa_grid, fit.mixture,
                        cfg.config_hash, "kappa_mixture")
        elif kind == "yaglom":
            fi = int(item.get("front", 0))
            if fi >= len(cfg.fronts):
                raise AnalysisError(f"yaglom analysis references missing front {fi}")
            times = item.get("times", [t for t in cfg.checkpoints_t if t > 0])
            xs, ys = [], []
            for t in times:
                yc = st.yaglom_front_count(ens, fi, float(t))
                verdict_rows.append(["yaglom", f"t={yc.t:g}", f"hits={yc.hits}",
                                     f"p_one={yc.p_one:.6g}",
                                     f"wilson=[{yc.p_one_wilson[0]:.6g},{yc.p_one_wilson[1]:.6g}]",
                                     "inconclusive" if yc.inconclusive else "ok"])
                xs.append(yc.t)
                ys.append(yc.p_one)
            _write_plot(out_dir / f"yaglom_front{fi}.dat", xs, ys, cfg.config_hash, "t_pone")
        elif kind == "speed":
            times = item.get("times")
            try:
                fit = st.speed_and_centring_fit(ens, times)
            except ValueError as e:
                raise AnalysisError(str(e)) from None
            verdict_rows.append(["speed", f"slope={fit.slope:.6g}",
                                 f"slope_se={fit.slope_se:.3g}",
                                 f"log_coef={fit.log_coef:.6g}",
                                 f"log_coef_se={fit.log_coef_se:.3g}",
                                 f"speed_predicted={sd.speed:.6g}"])
            _write_plot(out_dir / "speed_medians.dat", fit.times, fit.medians,
                        cfg.config_hash, "t_medianL")
        else:
            raise AnalysisError(f"unknown analysis kind {kind!r}")

    verdict_path = out_dir / "verdicts.csv"
    with open(verdict_path, "w") as fh:
        fh.write(f"# config={cfg.config_hash}\n")
        for row in verdict_rows:
            fh.write(",".join(row) + "\n")
    return verdict_path


def default_out_root() -> Path:
    return Path(os.environ.get("BBMLAB_OUT_ROOT", "bbmlab-results"))
