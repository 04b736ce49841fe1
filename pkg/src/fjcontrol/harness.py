"""Scenario orchestration: configuration, closed-loop runs, and rho sweeps.

A scenario is described by a JSON config document (strictly validated:
unknown keys are errors).  Within one sweep only the penalty strength
varies; network, corpus, and schedule are frozen so metric differences are
attributable to the penalty alone.  Sweep results are ordered by rho and
byte-identical regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import content as content_mod
from .content import Corpus, NoEligibleContentError, eligible, select_discrete
from .control import MpcConfig, MpcSolver, mb_steady_state, mf_control
from .costs import CostParams
from .dynamics import (
    Trajectory,
    build_matrices,
    h_matrix_min_eigenvalue,
    spectral_radius_check,
    step,
    write_trajectory_csv,
)
from .metrics import (
    RunMetrics,
    engagement_cost_per_user,
    misinformation_ratio,
    pareto_points,
    sentiment_shift,
)
from .network import (
    GENERATOR_NAME,
    GENERATOR_VERSION,
    Network,
    generate_network_a,
    load_network,
    network_b,
    validate_network,
)

SCHEMA_VERSION = 1

CONTROLLERS = ("baseline", "mf", "mb")
MODES = ("continuous", "discrete")

# Ten documented default seeds behind the trend properties; sweeps and the
# acceptance suite iterate this family.
DEFAULT_SEEDS = (19, 2, 6, 9, 10, 13, 17, 8, 12, 4)

# Seed offsets when a section does not pin its own seed: the corpus draws
# and the appearance schedule get independent streams from the master seed.
_CORPUS_SEED_OFFSET = 1
_SCHEDULE_SEED_OFFSET = 2

# Defaults for the standard 100-user configuration.
NETWORK_A_DEFAULTS = {
    "n": 100,
    "kappa_u": 0.25,
    "kappa_r": 0.80,
    "lambda_low": 0.00,
    "lambda_high": 0.05,
    "beta_alpha": 7.0,
    "beta_beta": 2.0,
}


class ConfigError(ValueError):
    """A scenario config document is malformed."""


class ScenarioRunError(RuntimeError):
    """A closed-loop run failed; carries the time step."""

    def __init__(self, t: int, message: str):
        super().__init__(f"t={t}: {message}")
        self.t = t


@dataclass(frozen=True)
class NetworkSpec:
    kind: str                      # "a" | "b" | "file"
    seed: int | None = None        # kind "a" only; defaults to the master seed
    params: dict | None = None     # kind "a" generator parameters
    path: str | None = None        # kind "file"


@dataclass(frozen=True)
class CorpusSpec:
    kind: str                      # "synthetic" | "file"
    seed: int | None = None        # synthesis seed; defaults from master seed
    size: int = 4000
    false_fraction: float = 0.5
    false_mean: float = 0.537
    true_mean: float = 0.379
    concentration: float = 10.0
    path: str | None = None
    schedule_seed: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkSpec
    controller: str
    mode: str
    cost: CostParams
    tau: int
    seed: int
    output_dir: str
    mpc: MpcConfig | None = None
    corpus: CorpusSpec | None = None
    empty_content_policy: str = "hold"   # "hold" | "zero"
    run_id: str | None = None

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.mode == "discrete" and self.corpus is None:
            raise ConfigError("discrete mode requires a corpus section")
        if self.controller == "mb" and self.mpc is None:
            object.__setattr__(self, "mpc", MpcConfig())
        if self.empty_content_policy not in ("hold", "zero"):
            raise ConfigError(
                f"empty_content_policy must be 'hold' or 'zero', got {self.empty_content_policy!r}"
            )

    @property
    def effective_rho(self) -> float:
        """The baseline controller optimizes engagement only (rho = 0)."""
        return 0.0 if self.controller == "baseline" else self.cost.rho

    @property
    def effective_cost(self) -> CostParams:
        if self.controller == "baseline" and self.cost.rho != 0.0:
            return dataclasses.replace(self.cost, rho=0.0)
        return self.cost

    def default_run_id(self) -> str:
        return (
            f"{self.controller}-{self.mode}-rho{format(self.effective_rho, '.10g')}"
            f"-seed{self.seed}"
        )


def _pop_section(doc: dict, key: str, where: str, required: bool = False) -> dict | None:
    section = doc.pop(key, None)
    if section is None:
        if required:
            raise ConfigError(f"{where}: missing required section {key!r}")
        return None
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: section {key!r} must be an object")
    return dict(section)


def _reject_unknown(section: dict, where: str) -> None:
    if section:
        raise ConfigError(f"{where}: unknown keys {sorted(section)}")


def parse_config(doc: dict, where: str = "config") -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed JSON document (strict keys)."""
    doc = dict(doc)
    version = doc.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{where}: schema_version must be {SCHEMA_VERSION}, got {version!r}")

    net_doc = _pop_section(doc, "network", where, required=True)
    if "path" in net_doc:
        network = NetworkSpec(kind="file", path=str(net_doc.pop("path")))
        _reject_unknown(net_doc, f"{where}.network")
    else:
        kind = net_doc.pop("type", None)
        if kind not in ("a", "b"):
            raise ConfigError(f"{where}.network: type must be 'a' or 'b', got {kind!r}")
        seed = net_doc.pop("seed", None)
        params = dict(NETWORK_A_DEFAULTS)
        for key in list(net_doc):
            if key in params:
                params[key] = net_doc.pop(key)
        _reject_unknown(net_doc, f"{where}.network")
        network = NetworkSpec(kind=kind, seed=seed, params=params if kind == "a" else None)

    cost_doc = _pop_section(doc, "cost", where, required=True)
    try:
        cost = CostParams(
            rho=float(cost_doc.pop("rho")),
            delta_novelty=float(cost_doc.pop("delta_novelty", 0.0)),
            window_z=int(cost_doc.pop("window_z", 5)),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}.cost: missing key {exc}") from exc
    _reject_unknown(cost_doc, f"{where}.cost")

    mpc = None
    mpc_doc = _pop_section(doc, "mpc", where)
    if mpc_doc is not None:
        mpc = MpcConfig(
            horizon=int(mpc_doc.pop("horizon", 50)),
            terminal_weight=float(mpc_doc.pop("terminal_weight", 1e3)),
            kkt_tolerance=float(mpc_doc.pop("kkt_tolerance", 1e-8)),
            max_iterations=int(mpc_doc.pop("max_iterations", 50_000)),
        )
        _reject_unknown(mpc_doc, f"{where}.mpc")

    corpus = None
    corpus_doc = _pop_section(doc, "corpus", where)
    if corpus_doc is not None:
        if "path" in corpus_doc:
            corpus = CorpusSpec(
                kind="file",
                path=str(corpus_doc.pop("path")),
                schedule_seed=corpus_doc.pop("schedule_seed", None),
            )
        else:
            corpus = CorpusSpec(
                kind="synthetic",
                seed=corpus_doc.pop("seed", None),
                size=int(corpus_doc.pop("size", 4000)),
                false_fraction=float(corpus_doc.pop("false_fraction", 0.5)),
                false_mean=float(corpus_doc.pop("false_mean", 0.537)),
                true_mean=float(corpus_doc.pop("true_mean", 0.379)),
                concentration=float(corpus_doc.pop("concentration", 10.0)),
                schedule_seed=corpus_doc.pop("schedule_seed", None),
            )
        _reject_unknown(corpus_doc, f"{where}.corpus")

    try:
        cfg = ScenarioConfig(
            network=network,
            controller=str(doc.pop("controller")),
            mode=str(doc.pop("mode")),
            cost=cost,
            mpc=mpc,
            tau=int(doc.pop("tau")),
            corpus=corpus,
            seed=int(doc.pop("seed")),
            output_dir=str(doc.pop("output_dir", "out")),
            empty_content_policy=str(doc.pop("empty_content_policy", "hold")),
            run_id=doc.pop("run_id", None),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing key {exc}") from exc
    _reject_unknown(doc, where)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return parse_config(doc, where=str(path))


def materialize_network(cfg: ScenarioConfig) -> Network:
    spec = cfg.network
    if spec.kind == "b":
        return network_b()
    if spec.kind == "file":
        return load_network(spec.path)
    params = dict(NETWORK_A_DEFAULTS)
    params.update(spec.params or {})
    seed = spec.seed if spec.seed is not None else cfg.seed
    return generate_network_a(
        n=int(params["n"]),
        kappa_u=float(params["kappa_u"]),
        kappa_r=float(params["kappa_r"]),
        lambda_low=float(params["lambda_low"]),
        lambda_high=float(params["lambda_high"]),
        beta_alpha=float(params["beta_alpha"]),
        beta_beta=float(params["beta_beta"]),
        seed=int(seed),
    )


def materialize_corpus(cfg: ScenarioConfig) -> Corpus | None:
    """Build or load the scheduled corpus for a discrete-mode run.

    A file corpus whose rows carry nonzero appearance times keeps them;
    otherwise the scheduler assigns uniform appearance times over the run.
    """
    spec = cfg.corpus
    if spec is None:
        return None
    if spec.kind == "file":
        corpus = content_mod.ingest_corpus(spec.path)
        if any(item.t_c != 0 for item in corpus.items):
            return corpus
    else:
        seed = spec.seed if spec.seed is not None else cfg.seed + _CORPUS_SEED_OFFSET
        corpus = content_mod.synthesize_corpus(
            n_items=spec.size,
            false_fraction=spec.false_fraction,
            false_mean=spec.false_mean,
            true_mean=spec.true_mean,
            concentration=spec.concentration,
            seed=int(seed),
        )
    schedule_seed = (
        spec.schedule_seed if spec.schedule_seed is not None
        else cfg.seed + _SCHEDULE_SEED_OFFSET
    )
    return content_mod.schedule_appearances(corpus, cfg.tau, int(schedule_seed))


@dataclass
class RunResult:
    trajectory: Trajectory
    metrics: RunMetrics
    diagnostics: dict

    def __iter__(self):
        # Allows ``trajectory, metrics = run_scenario(cfg)``.
        return iter((self.trajectory, self.metrics))


def run_scenario(
    cfg: ScenarioConfig,
    net: Network | None = None,
    corpus: Corpus | None = None,
) -> RunResult:
    """Execute one closed-loop run and compute its metrics.

    ``net`` and ``corpus`` may be passed pre-built (a sweep freezes them
    across rho values); otherwise they are materialized from the config.
    """
    if net is None:
        net = materialize_network(cfg)
    if corpus is None and cfg.mode == "discrete":
        corpus = materialize_corpus(cfg)

    m = build_matrices(net)
    params = cfg.effective_cost
    diagnostics: dict = {"warnings": []}

    radius = spectral_radius_check(m, params, content_age=0)
    diagnostics["spectral_radius"] = radius
    if radius >= 1.0 and params.delta_novelty == 0.0:
        msg = (
            f"closed-loop spectral radius {radius:.6f} >= 1; "
            "the run will not settle to a fixed point"
        )
        diagnostics["warnings"].append(msg)
        warnings.warn(msg, stacklevel=2)

    solver = None
    if cfg.controller == "mb":
        target = mb_steady_state(m, net, params, age=0)
        solver = MpcSolver(m, target, params, cfg.mpc)
        diagnostics["mb_target_u"] = target.u_star

    tau = cfg.tau
    states = np.empty((tau + 1, net.n))
    controls = np.empty(tau)
    content_ids: list[str | None] = []
    u_targets = np.empty(tau)
    mpc_iterations = 0

    x = net.x0.copy()
    states[0] = x
    prev_u = 0.0
    for t in range(tau):
        try:
            if solver is not None:
                u_target = solver.control(x, t, t)
                mpc_iterations += solver.last_diagnostics.iterations
            else:
                u_target = mf_control(x, t, t, params)
            u_targets[t] = u_target

            if cfg.mode == "discrete":
                candidates = eligible(corpus, t, params.window_z)
                try:
                    item = select_discrete(x, u_target, candidates, t, params)
                    u = item.score
                    content_ids.append(item.id)
                except NoEligibleContentError:
                    u = prev_u if cfg.empty_content_policy == "hold" else 0.0
                    content_ids.append(None)
            else:
                u = u_target
                content_ids.append(None)

            x = step(m, x, u)
        except ScenarioRunError:
            raise
        except Exception as exc:
            raise ScenarioRunError(t, str(exc)) from exc
        controls[t] = u
        states[t + 1] = x
        prev_u = u

    traj = Trajectory(states=states, controls=controls, content_ids=tuple(content_ids))

    shift_mean, shift_median = sentiment_shift(traj)
    eng_mean, eng_median = engagement_cost_per_user(traj)
    misinformation = None
    if cfg.mode == "discrete":
        misinformation = misinformation_ratio(traj, corpus)
    metrics = RunMetrics(
        misinformation=misinformation,
        sentiment_shift_mean=shift_mean,
        sentiment_shift_median=shift_median,
        engagement_cost_mean=eng_mean,
        engagement_cost_median=eng_median,
        rho=params.rho,
    )
    diagnostics["u_target"] = u_targets
    if solver is not None:
        diagnostics["mpc_iterations_total"] = mpc_iterations
        diagnostics["mpc_final_kkt_residual"] = solver.last_diagnostics.kkt_residual
    return RunResult(trajectory=traj, metrics=metrics, diagnostics=diagnostics)


@dataclass(frozen=True)
class SweepEntry:
    rho: float
    metrics: RunMetrics | None
    error: str | None = None
    result: RunResult | None = None


@dataclass(frozen=True)
class SweepReport:
    entries: tuple[SweepEntry, ...]
    pareto: tuple | None


def rho_grid(rho_min: float, rho_max: float, rho_step: float) -> list[float]:
    """Inclusive arithmetic grid; values rounded to 10 decimals for clean keys."""
    if rho_min > rho_max:
        raise ValueError(f"need rho_min <= rho_max, got [{rho_min}, {rho_max}]")
    if rho_step <= 0:
        raise ValueError(f"rho_step must be > 0, got {rho_step}")
    count = int(math.floor((rho_max - rho_min) / rho_step + 1e-9)) + 1
    return [round(rho_min + k * rho_step, 10) for k in range(count)]


def _with_rho(cfg: ScenarioConfig, rho: float) -> ScenarioConfig:
    return dataclasses.replace(
        cfg, cost=dataclasses.replace(cfg.cost, rho=rho), run_id=None
    )


def _sweep_worker(cfg: ScenarioConfig, rho: float) -> SweepEntry:
    # Workers rebuild network and corpus from the (seeded) config, so the
    # result is identical no matter which process runs it.
    try:
        result = run_scenario(_with_rho(cfg, rho))
        return SweepEntry(rho=rho, metrics=result.metrics, result=result)
    except Exception as exc:  # recorded per-rho; the sweep continues
        return SweepEntry(rho=rho, metrics=None, error=f"{type(exc).__name__}: {exc}")


def run_sweep(
    cfg: ScenarioConfig,
    rho_min: float,
    rho_max: float,
    rho_step: float,
    jobs: int = 1,
) -> SweepReport:
    """Run one scenario per rho value with everything else frozen.

    Only the penalty varies: seeds, network, corpus, and schedule are fixed
    by the config.  Runs may execute in parallel; the report is ordered by
    rho and independent of the execution order.
    """
    grid = rho_grid(rho_min, rho_max, rho_step)
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_sweep_worker, [cfg] * len(grid), grid))
    else:
        entries = [_sweep_worker(cfg, rho) for rho in grid]
    entries.sort(key=lambda e: e.rho)

    pareto = None
    ok_metrics = [e.metrics for e in entries if e.metrics is not None]
    if ok_metrics and all(m.misinformation is not None for m in ok_metrics):
        pareto = pareto_points(ok_metrics)
    return SweepReport(entries=tuple(entries), pareto=pareto)


# ---------------------------------------------------------------------------
# Validation


def validate_scenario(cfg: ScenarioConfig) -> dict:
    """Pre-flight report: network invariants, stability, penalty certificate,
    and corpus statistics.

    Stability and certificate checks run at the endpoints {0, rho} of the
    penalty range this config can reach.
    """
    report: dict = {"violations": [], "warnings": []}

    net = materialize_network(cfg)
    net_report = validate_network(net)
    report["network"] = net_report.as_dict()
    report["violations"] += [v.message for v in net_report.violations]
    report["warnings"] += [w.message for w in net_report.warnings]

    m = build_matrices(net)
    rhos = sorted({0.0, cfg.effective_rho})
    spectral = {}
    h_matrix = {}
    for rho in rhos:
        params = dataclasses.replace(cfg.effective_cost, rho=rho)
        key = format(rho, ".10g")
        radius = spectral_radius_check(m, params, content_age=0)
        spectral[key] = radius
        if radius >= 1.0:
            report["warnings"].append(
                f"spectral radius {radius:.6f} >= 1 at rho={key}: no fixed point"
            )
        min_eig = h_matrix_min_eigenvalue(net.n, rho, params.delta_novelty, 0)
        h_matrix[key] = min_eig
        if rho == 0.0:
            report["warnings"].append(
                "penalty certificate at rho=0 is positive semidefinite only"
            )
        elif min_eig <= 0.0:
            report["violations"].append(
                f"penalty certificate not positive definite at rho={key} "
                f"(min eigenvalue {min_eig})"
            )
    report["spectral_radius"] = spectral
    report["h_matrix_min_eigenvalue"] = h_matrix

    if cfg.mode == "discrete":
        corpus = materialize_corpus(cfg)
        false_scores = [i.score for i in corpus.items if i.is_false]
        true_scores = [i.score for i in corpus.items if not i.is_false]
        stats = {
            "size": len(corpus),
            "false_count": len(false_scores),
            "true_count": len(true_scores),
            "false_score_mean": float(np.mean(false_scores)) if false_scores else None,
            "true_score_mean": float(np.mean(true_scores)) if true_scores else None,
        }
        report["corpus"] = stats
        if false_scores and true_scores and np.mean(false_scores) <= np.mean(true_scores):
            report["warnings"].append(
                "corpus separation inverted: false-score mean does not exceed "
                "true-score mean"
            )
    else:
        report["corpus"] = None

    report["ok"] = not report["violations"]
    return report


# ---------------------------------------------------------------------------
# Output writers


def _json_dump(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _provenance(cfg: ScenarioConfig) -> dict:
    if cfg.network.kind == "file":
        network_desc = f"file:{cfg.network.path}"
    else:
        network_desc = cfg.network.kind
    return {
        "seed": cfg.seed,
        "network": network_desc,
        "controller": cfg.controller,
        "mode": cfg.mode,
        "tau": cfg.tau,
        "generator": f"{GENERATOR_NAME}-v{GENERATOR_VERSION}",
    }


def write_run_outputs(
    cfg: ScenarioConfig,
    result: RunResult,
    run_dir: Path,
    figures: bool = True,
) -> None:
    """Write trajectory.csv, metrics.json, validation.json (and figures)."""
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result.trajectory, run_dir / "trajectory.csv")

    metrics_doc = result.metrics.as_dict()
    metrics_doc["provenance"] = _provenance(cfg)
    metrics_doc["spectral_radius"] = result.diagnostics.get("spectral_radius")
    _json_dump(metrics_doc, run_dir / "metrics.json")

    _json_dump(validate_scenario(cfg), run_dir / "validation.json")

    if figures:
        from .plots import plot_trajectory

        plot_trajectory(result.trajectory, run_dir / "trajectory.png", cfg=cfg)


_SWEEP_COLUMNS = (
    "rho",
    "misinformation",
    "engagement_cost_mean",
    "engagement_cost_median",
    "sentiment_shift_mean",
    "sentiment_shift_median",
    "status",
)


def write_sweep_csv(report: SweepReport, path: Path) -> None:
    def fmt(v) -> str:
        return "" if v is None else format(v, ".17g")

    lines = [",".join(_SWEEP_COLUMNS)]
    for entry in report.entries:
        m = entry.metrics
        if m is None:
            row = [fmt(entry.rho), "", "", "", "", "", f"error: {entry.error}"]
        else:
            row = [
                fmt(entry.rho),
                fmt(m.misinformation),
                fmt(m.engagement_cost_mean),
                fmt(m.engagement_cost_median),
                fmt(m.sentiment_shift_mean),
                fmt(m.sentiment_shift_median),
                "ok",
            ]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_pareto_csv(report: SweepReport, path: Path) -> None:
    lines = ["rho,engagement_cost_median,misinformation,non_dominated"]
    for p in report.pareto or ():
        lines.append(
            f"{format(p.rho, '.17g')},{format(p.engagement_cost_median, '.17g')},"
            f"{format(p.misinformation, '.17g')},{int(p.non_dominated)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sweep_outputs(
    cfg: ScenarioConfig,
    report: SweepReport,
    output_dir: Path,
    figures: bool = True,
    per_run: bool = True,
) -> None:
    """Write sweep.csv (the data behind the metric figures), pareto.csv,
    per-run directories, and rendered figures."""
    output_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(report, output_dir / "sweep.csv")
    if report.pareto is not None:
        write_pareto_csv(report, output_dir / "pareto.csv")
    if per_run:
        for entry in report.entries:
            if entry.result is None:
                continue
            run_cfg = _with_rho(cfg, entry.rho)
            run_dir = output_dir / run_cfg.default_run_id()
            write_run_outputs(run_cfg, entry.result, run_dir, figures=False)
    if figures:
        from .plots import plot_sweep

        plot_sweep(report, output_dir / "sweep.png", cfg=cfg)
