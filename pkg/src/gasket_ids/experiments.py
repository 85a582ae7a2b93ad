"""Experiment runner: configuration, orchestration, result tables, emission.

Experiments E1-E9 cover the convergence program: free N-vs-D comparison,
Poissonian cloud averaging, profile regularity checks, obstacle variants,
the exponential formula, collar measures, quotient-kernel identities, the
verlog-type bound, and the free heat-trace slope.

Determinism contract: every run is a pure function of (config, master seed);
the config hash (sha256 of the canonical config document, excluding output
path and thread count) is embedded in every emitted row, and outputs are
byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

from . import geometry, montecarlo, operators, potentials, spectra, subordinators
from .geometry import build_mesh
from .potentials import ProfileSpec
from .subordinators import SubordinatorSpec

EXPERIMENTS = (
    "E1-free-ND",
    "E2-poisson-convergence",
    "E3-profile-checks",
    "E4-obstacles",
    "E5-exponential-formula",
    "E6-collar",
    "E7-quotient-identities",
    "E8-verlog",
    "E9-heat-trace-slope",
)

SEED_ENV_VAR = "GASKET_IDS_SEED"
JSON_SCHEMA_VERSION = 1

SPECTRA_FIELDS = ("seed", "M", "n", "K", "bc", "star_flag", "t", "value",
                  "eigencount", "runtime_ms")
MC_FIELDS = ("experiment", "M", "t", "estimator", "mean", "stderr",
             "trials", "seed")
SUMMARY_FIELDS = ("experiment", "key", "value", "flag")


class SubordinatorConfig(BaseModel):
    family: str = "stable"
    alpha: float = geometry.D_W / 2
    drift: float = 0.0
    mass: float = 1.0
    beta: float = 0.0
    mixture: list[float] = Field(default_factory=list)

    def to_spec(self) -> SubordinatorSpec:
        return SubordinatorSpec(self.family, alpha=self.alpha, drift=self.drift,
                                mass=self.mass, beta=self.beta,
                                mixture=tuple(self.mixture))


class ProfileConfig(BaseModel):
    family: str = "radial"
    R: float = 1.0
    knots: list[list[float]] = Field(default_factory=list)  # [[radius, value]]
    M0: int = 0
    psi_depth: int = 0
    psi_values: list[float] = Field(default_factory=list)
    coeffs: list[float] = Field(default_factory=list)
    tail_ratio: float = 0.0

    def to_spec(self) -> ProfileSpec:
        if self.family == "radial":
            knots = tuple((float(r), float(v)) for r, v in self.knots) or None
            return ProfileSpec("radial", R=self.R, knots=knots)
        if self.family == "cellwise":
            return ProfileSpec("cellwise", M0=self.M0, psi_depth=self.psi_depth,
                               psi_values=tuple(self.psi_values))
        if self.family == "shellwise":
            return ProfileSpec("shellwise", coeffs=tuple(self.coeffs),
                               tail_ratio=self.tail_ratio)
        raise ValueError(f"profile family {self.family!r} is not configurable")


class ExperimentConfig(BaseModel):
    experiment: str
    M_list: list[int] = Field(default_factory=lambda: [1, 2, 3])
    n: int = 2
    K: int = 2
    subordinator: SubordinatorConfig = Field(default_factory=SubordinatorConfig)
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    intensity: float = 0.5
    obstacle_radius: float = 0.5
    t_list: list[float] = Field(default_factory=lambda: [0.25, 1.0, 4.0])
    R_clouds: int = 200
    master_seed: int = 0
    threads: int = 1
    out: Optional[str] = None

    @field_validator("experiment")
    @classmethod
    def _known_experiment(cls, v):
        if v not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {v!r}; choose from {EXPERIMENTS}")
        return v

    @field_validator("M_list")
    @classmethod
    def _m_list(cls, v):
        if not v or sorted(v) != v or any(m < 0 for m in v):
            raise ValueError("M_list must be nondecreasing and non-negative")
        return v

    @field_validator("n", "K")
    @classmethod
    def _nonneg(cls, v):
        if v < 0:
            raise ValueError("mesh parameters must be non-negative")
        return v

    @field_validator("R_clouds")
    @classmethod
    def _r_clouds(cls, v):
        if v < 1:
            raise ValueError("R_clouds must be positive")
        return v

    def effective_seed(self) -> int:
        env = os.environ.get(SEED_ENV_VAR)
        return int(env) if env else self.master_seed

    def config_hash(self) -> str:
        payload = self.model_dump()
        payload.pop("out", None)
        payload.pop("threads", None)
        payload["master_seed"] = self.effective_seed()
        doc = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return ExperimentConfig(**data)


@dataclass
class ResultTable:
    config: ExperimentConfig
    config_hash: str
    spectra_rows: list = field(default_factory=list)
    mc_rows: list = field(default_factory=list)
    summary_rows: list = field(default_factory=list)

    def add_summary(self, key: str, value, flag: str = ""):
        self.summary_rows.append({"experiment": self.config.experiment,
                                  "key": key, "value": value, "flag": flag})


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"experiment failed at stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _slope(log_t: np.ndarray, log_val: np.ndarray) -> float:
    return float(np.polyfit(log_t, log_val, 1)[0])


# ---------------------------------------------------------------- experiments

def _free_transforms(cfg: ExperimentConfig, table: ResultTable):
    spec = cfg.subordinator.to_spec()
    for M in cfg.M_list:
        base_D = spectra.ambient_base(M, cfg.n, cfg.K, spec)
        base_N = spectra.quotient_base(M, cfg.n, cfg.K, spec)
        H_D = spectra.assemble(base_D, None, "dirichlet", M)
        H_N = spectra.assemble(base_N, None, "neumann", M)
        for bc, H, star in (("dirichlet", H_D, 0), ("neumann", H_N, 0)):
            mu = spectra.spectral_measure(H)
            for t in cfg.t_list:
                table.spectra_rows.append({
                    "seed": 0, "M": M, "n": cfg.n, "K": cfg.K, "bc": bc,
                    "star_flag": star, "t": t, "value": mu.laplace(t),
                    "eigencount": H.dim, "runtime_ms": 0.0})


def _run_e1(cfg: ExperimentConfig, table: ResultTable):
    _free_transforms(cfg, table)
    rows = table.spectra_rows
    for t in cfg.t_list:
        gaps = []
        for M in cfg.M_list:
            lN = next(r["value"] for r in rows
                      if r["M"] == M and r["bc"] == "neumann" and r["t"] == t)
            lD = next(r["value"] for r in rows
                      if r["M"] == M and r["bc"] == "dirichlet" and r["t"] == t)
            gaps.append(lN - lD)
            table.add_summary(f"ND_gap_M{M}_t{t}", lN - lD,
                              "ok" if lN - lD >= -1e-10 else "violated")
        dec = all(b < a for a, b in zip(gaps, gaps[1:]))
        table.add_summary(f"ND_gap_decreasing_t{t}", dec,
                          "ok" if dec else "violated")


_BC_OF = {"L_D": ("dirichlet", 0), "L_N": ("neumann", 0),
          "L_Dstar": ("dirichlet", 1), "L_Nstar": ("neumann", 1)}


def _annealed(cfg: ExperimentConfig, table: ResultTable, obstacle: bool):
    spec = cfg.subordinator.to_spec()
    profile = None if obstacle else cfg.profile.to_spec()
    seed = cfg.effective_seed()
    a = cfg.obstacle_radius if obstacle else None
    window = build_mesh(max(cfg.M_list), cfg.n)

    def one(k):
        cloud = potentials.sample_cloud(cfg.intensity, window, (seed, k))
        return {M: spectra.four_transform_suite(
                    M, cfg.n, cfg.K, spec, profile, cloud, cfg.t_list,
                    obstacle_a=a)
                for M in cfg.M_list}

    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            per_cloud = list(ex.map(one, range(cfg.R_clouds)))
    else:
        per_cloud = [one(k) for k in range(cfg.R_clouds)]

    for k, res in enumerate(per_cloud):
        for M in cfg.M_list:
            for name, (bc, star) in _BC_OF.items():
                for t in cfg.t_list:
                    table.spectra_rows.append({
                        "seed": k, "M": M, "n": cfg.n, "K": cfg.K, "bc": bc,
                        "star_flag": star, "t": t,
                        "value": res[M][name][t],
                        "eigencount": res[M]["eigencount"][name],
                        # wall-clock timings are dropped from emitted rows so
                        # reruns are byte-identical
                        "runtime_ms": 0.0})

    stats = {}
    for M in cfg.M_list:
        for name in _BC_OF:
            for t in cfg.t_list:
                vals = np.array([per_cloud[k][M][name][t]
                                 for k in range(cfg.R_clouds)])
                m = float(vals.mean())
                se = (float(vals.std(ddof=1) / math.sqrt(len(vals)))
                      if len(vals) > 1 else 0.0)
                stats[(M, name, t)] = (m, se, vals)
                table.mc_rows.append({
                    "experiment": cfg.experiment, "M": M, "t": t,
                    "estimator": name, "mean": m, "stderr": se,
                    "trials": cfg.R_clouds, "seed": seed})

    for t in cfg.t_list:
        # N-vs-D inequality and gap decay
        gap_means = []
        for M in cfg.M_list:
            gaps = stats[(M, "L_N", t)][2] - stats[(M, "L_D", t)][2]
            worst = float(gaps.min())
            table.add_summary(f"ND_min_gap_M{M}_t{t}", worst,
                              "ok" if worst >= -1e-10 else "violated")
            gap_means.append(float(np.abs(gaps).mean()))
            table.add_summary(f"ND_mean_absgap_M{M}_t{t}", gap_means[-1])
            table.add_summary(f"ND_sqdev_M{M}_t{t}",
                              float(((gaps - gaps.mean()) ** 2).mean()))
        dec = all(b < a_ for a_, b in zip(gap_means, gap_means[1:]))
        table.add_summary(f"ND_mean_absgap_decreasing_t{t}", dec,
                          "ok" if dec else "violated")

        # E L^{N*} monotone nonincreasing within a 2-SE band (CRN)
        mono = True
        for M0, M1 in zip(cfg.M_list, cfg.M_list[1:]):
            d = stats[(M1, "L_Nstar", t)][2] - stats[(M0, "L_Nstar", t)][2]
            dm = float(d.mean())
            dse = (float(d.std(ddof=1) / math.sqrt(len(d)))
                   if len(d) > 1 else 0.0)
            ok = dm <= 2.0 * dse
            mono &= ok
            table.add_summary(f"Nstar_step_M{M0}to{M1}_t{t}", dm,
                              "ok" if ok else "violated")
        table.add_summary(f"Nstar_nonincreasing_t{t}", mono,
                          "ok" if mono else "violated")

        # Dirichlet variance decay
        variances = [float(stats[(M, "L_D", t)][2].var(ddof=1))
                     for M in cfg.M_list]
        for M, v in zip(cfg.M_list, variances):
            table.add_summary(f"var_LD_M{M}_t{t}", v)
        for (M0, v0), (M1, v1) in zip(zip(cfg.M_list, variances),
                                      zip(cfg.M_list[1:], variances[1:])):
            ratio = v1 / v0 if v0 > 0 else 0.0
            table.add_summary(f"var_ratio_M{M0}to{M1}_t{t}", ratio,
                              "ok" if ratio < 0.8 else "violated")


def _run_e3(cfg: ExperimentConfig, table: ResultTable):
    profile = cfg.profile.to_spec()
    mesh = build_mesh(max(cfg.M_list) + 2, cfg.n)
    w3 = potentials.check_W3(profile, cfg.M_list, mesh,
                             seed=cfg.effective_seed())
    table.add_summary("W3_holds", w3["holds"],
                      "ok" if w3["holds"] else "violated")
    if not w3["holds"]:
        table.add_summary("W3_witness", str(w3["witnesses"][0]))
    w2 = potentials.check_W2(profile, max(cfg.M_list), mesh)
    table.add_summary("W2_convergent_trend", w2["convergent_trend"],
                      "ok" if w2["convergent_trend"] else "violated")
    for M, s in enumerate(w2["partial_sums"], start=1):
        table.add_summary(f"W2_term_M{M}", s)


def _run_e5(cfg: ExperimentConfig, table: ResultTable):
    window = build_mesh(max(cfg.M_list), cfg.n)
    c = 0.7
    ncells = len(window.cells)
    f_vals = np.zeros(ncells)
    f_vals[:max(1, ncells // 8)] = c
    n_clouds = 10_000
    mean, se = montecarlo.fk_cloud_average(window, f_vals, cfg.intensity,
                                           n_clouds, cfg.effective_seed())
    rhs = potentials.exponential_formula_rhs(cfg.intensity, window, f_vals)
    table.mc_rows.append({
        "experiment": cfg.experiment, "M": window.M, "t": 0.0,
        "estimator": "fk_factor", "mean": mean, "stderr": se,
        "trials": n_clouds, "seed": cfg.effective_seed()})
    table.add_summary("closed_form", rhs)
    ok = abs(mean - rhs) <= 4.0 * se
    table.add_summary("exponential_formula_match", ok,
                      "ok" if ok else "violated")


def _run_e6(cfg: ExperimentConfig, table: ResultTable):
    from fractions import Fraction
    for M in cfg.M_list:
        for r in (Fraction(1, 2), Fraction(1), Fraction(2)):
            if r >= 2 ** M:
                continue
            val = geometry.collar_measure(M, r)
            table.add_summary(f"collar_M{M}_r{r}", float(val), "exact")
    v1 = geometry.collar_measure(1, 1)
    v2 = geometry.collar_measure(2, 1)
    table.add_summary("lemma21_M1_r1", float(v1),
                      "ok" if v1 == 2 else "violated")
    table.add_summary("lemma21_M2_r1", float(v2),
                      "ok" if v2 == 4 else "violated")


def _run_e7(cfg: ExperimentConfig, table: ResultTable):
    spec = cfg.subordinator.to_spec()
    t = cfg.t_list[len(cfg.t_list) // 2]
    tails, gaps = [], []
    for M in cfg.M_list:
        rep = operators.kernel_comparison_report(
            M, cfg.n, cfg.K, spec, t,
            amb_gen=spectra.ambient_base(M, cfg.n, cfg.K, spec),
            quo_gen=spectra.quotient_base(M, cfg.n, cfg.K, spec))
        tails.append(rep["C_tail"])
        gaps.append(rep["diag_gap"])
        for key in ("C_tail", "diag_gap", "rotation_residual"):
            table.add_summary(f"{key}_M{M}_t{t}", rep[key])
    dec_t = all(b < a for a, b in zip(tails, tails[1:]))
    dec_g = all(b < a for a, b in zip(gaps, gaps[1:]))
    table.add_summary("C_tail_decreasing", dec_t, "ok" if dec_t else "violated")
    table.add_summary("diag_gap_decreasing", dec_g, "ok" if dec_g else "violated")


def _run_e8(cfg: ExperimentConfig, table: ResultTable):
    spec = cfg.subordinator.to_spec()
    for t in cfg.t_list:
        table.add_summary(f"verlog_t{t}", subordinators.verlog_bound(spec, t))
    half = SubordinatorSpec("stable", alpha=geometry.D_W / 2)
    val = subordinators.verlog_bound(half, 1.0)
    target = 2.0 + math.exp(-1.0)
    ok = abs(val - target) < 1e-6
    table.add_summary("verlog_halfstable_t1", val, "ok" if ok else "violated")


def _run_e9(cfg: ExperimentConfig, table: ResultTable):
    M = cfg.M_list[0]
    base = spectra.quotient_base(M, cfg.n, cfg.K,
                                 SubordinatorSpec("identity-drift"))
    w = base.spectrum()
    ts = np.logspace(-3, -1, 9)
    vals = np.array([np.exp(-t * w).sum() for t in ts]) * 3.0 ** (-M)
    slope = _slope(np.log(ts), np.log(vals))
    for t, v in zip(ts, vals):
        table.spectra_rows.append({
            "seed": 0, "M": M, "n": cfg.n, "K": cfg.K, "bc": "neumann",
            "star_flag": 0, "t": float(t), "value": float(v),
            "eigencount": base.dim, "runtime_ms": 0.0})
    table.add_summary("free_heat_trace_slope", slope)
    target = -geometry.D_S / 2
    table.add_summary("slope_target", target,
                      "ok" if abs(slope - target) < 0.05 else "violated")


_RUNNERS = {
    "E1-free-ND": _run_e1,
    "E2-poisson-convergence": lambda c, t: _annealed(c, t, obstacle=False),
    "E3-profile-checks": _run_e3,
    "E4-obstacles": lambda c, t: _annealed(c, t, obstacle=True),
    "E5-exponential-formula": _run_e5,
    "E6-collar": _run_e6,
    "E7-quotient-identities": _run_e7,
    "E8-verlog": _run_e8,
    "E9-heat-trace-slope": _run_e9,
}


def run(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(config, config.config_hash())
    try:
        _RUNNERS[config.experiment](config, table)
    except Exception as exc:        # noqa: BLE001 - name the failing stage
        if config.out:
            emit(table, "csv", config.out)
        raise ExperimentError(config.experiment, exc) from exc
    if config.out:
        emit(table, "csv", config.out)
        emit(table, "json", config.out)
    return table


def _write_csv(path: Path, fields, rows, extra):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(fields) + list(extra))
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields]
                            + [_fmt(v) for v in extra.values()])


def emit(table: ResultTable, fmt: str, out_dir) -> list:
    """Write the table; CSV is '.'-decimal, LF, headered; JSON is versioned."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"config_hash": table.config_hash}
    written = []
    if fmt == "csv":
        for name, fields, rows in (
                ("spectra.csv", SPECTRA_FIELDS, table.spectra_rows),
                ("montecarlo.csv", MC_FIELDS, table.mc_rows),
                ("summary.csv", SUMMARY_FIELDS, table.summary_rows)):
            p = out / name
            _write_csv(p, fields, rows, extra)
            written.append(p)
    elif fmt == "json":
        p = out / "results.json"
        doc = {"schema_version": JSON_SCHEMA_VERSION,
               "config_hash": table.config_hash,
               "config": table.config.model_dump(exclude={"out", "threads"}),
               "spectra_rows": table.spectra_rows,
               "mc_rows": table.mc_rows,
               "summary_rows": table.summary_rows}
        with open(p, "w", newline="\n") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append(p)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return written
