"""Training loop, persistence, metrics assembly, and passive replay.

A run proceeds generation by generation: the engine proposes candidates,
each candidate is embedded, the selection policy decides who gets an
expensive evaluation (everyone, when the surrogate is disabled), outcomes
are appended to a line-delimited database, the surrogate is refit on all
converged expensive data, and the combined truth/predicted fitness feeds
back into survivor selection.

Everything is deterministic per seed: random streams are spawned from one
seed sequence per purpose and generation, costs are counted in abstract
evaluation units rather than wall time, and floats are serialized with
round-trip repr, so identical configurations produce byte-identical
databases and reports.

Passive replay re-runs only the selection side against a stored baseline
database: stored objectives stand in for the expensive evaluator, which is
never constructed, let alone called.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import embedding as emb_mod
from . import evaluators as eval_mod
from . import metrics as metrics_mod
from . import selection as sel_mod
from . import surrogate as sur_mod
from . import symreg

__all__ = [
    "ConfigError",
    "RunError",
    "ReplayError",
    "GepSettings",
    "EmbeddingSettings",
    "SurrogateSettings",
    "EvaluatorSpec",
    "RunConfig",
    "EvaluationRecord",
    "EvaluationDatabase",
    "load_run_config",
    "build_run_config",
    "run_training",
    "passive_replay",
    "metrics_from_records",
]

log = logging.getLogger("sagep")

# Objectives are clamped here before the optional log10 transform; a perfect
# candidate would otherwise send the regression target to -inf.
_LOG_FLOOR = 1e-12


class ConfigError(ValueError):
    """A run configuration is malformed or references missing files."""


class RunError(RuntimeError):
    """A training run cannot proceed."""


class ReplayError(RuntimeError):
    """A stored database cannot be replayed."""


@dataclass(frozen=True)
class GepSettings:
    head_len: int = 8
    operators: tuple[str, ...] = ("+", "-", "*")
    n_constants: int = 5
    const_range: tuple[float, float] = (-2.0, 2.0)
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9


@dataclass(frozen=True)
class EmbeddingSettings:
    feature_table: str | None = None
    average_inputs_first: bool = False


@dataclass(frozen=True)
class SurrogateSettings:
    restarts: int = 8
    log_error: bool = True
    bounds: sur_mod.ParamBounds = field(default_factory=sur_mod.ParamBounds)


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str = "channel"
    case: str | dict | None = None
    table: str | None = None
    targets: tuple[str, ...] = ()
    slot_of_objective: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("channel", "symbolic"):
            raise ConfigError(f"unknown evaluator kind {self.kind!r}")
        if self.kind == "symbolic" and (self.table is None or not self.targets):
            raise ConfigError("symbolic evaluator needs a table and targets")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    generations: int = 10
    population: int = 96
    offspring: int = 48
    surrogate_enabled: bool = True
    output_dir: str = "runs/out"
    gep: GepSettings = field(default_factory=GepSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    surrogate: SurrogateSettings = field(default_factory=SurrogateSettings)
    selection: sel_mod.SelectionConfig | None = None
    evaluator: EvaluatorSpec = field(default_factory=EvaluatorSpec)

    def __post_init__(self):
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        # population 2 is the floor because embedding normalization fits its
        # statistics on the generation-0 population
        if self.population < 2 or self.offspring < 1:
            raise ConfigError("population must be >= 2 and offspring >= 1")

    def selection_config(self) -> sel_mod.SelectionConfig:
        if self.selection is not None:
            return self.selection
        return sel_mod.default_selection_config(self.population)


def _resolve(base: Path | None, value: str) -> str:
    path = Path(value)
    if base is not None and not path.is_absolute():
        path = base / path
    return str(path)


def build_run_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a validated RunConfig from a parsed mapping.

    Relative paths are resolved against the configuration file's directory
    so a config plus its referenced files stay relocatable as a unit.
    """
    raw = dict(raw)
    try:
        gep_raw = dict(raw.pop("gep", {}))
        if "operators" in gep_raw:
            gep_raw["operators"] = tuple(gep_raw["operators"])
        if "const_range" in gep_raw:
            gep_raw["const_range"] = tuple(gep_raw["const_range"])
        gep = GepSettings(**gep_raw)

        emb_raw = dict(raw.pop("embedding", {}))
        if emb_raw.get("feature_table"):
            emb_raw["feature_table"] = _resolve(base_dir, emb_raw["feature_table"])
        embedding = EmbeddingSettings(**emb_raw)

        sur_raw = dict(raw.pop("surrogate", {}))
        if "bounds" in sur_raw:
            sur_raw["bounds"] = sur_mod.ParamBounds(
                **{k: tuple(v) for k, v in sur_raw["bounds"].items()})
        surrogate = SurrogateSettings(**sur_raw)

        population = int(raw.get("population", 48))
        sel_raw = raw.pop("selection", None)
        selection = None
        if sel_raw is not None:
            sel_raw = dict(sel_raw)
            sel_raw.setdefault("n_init", max(1, round(0.4 * population)))
            selection = sel_mod.SelectionConfig(**sel_raw)

        ev_raw = dict(raw.pop("evaluator", {}))
        if isinstance(ev_raw.get("case"), str):
            ev_raw["case"] = _resolve(base_dir, ev_raw["case"])
        if ev_raw.get("table"):
            ev_raw["table"] = _resolve(base_dir, ev_raw["table"])
        if "targets" in ev_raw:
            ev_raw["targets"] = tuple(ev_raw["targets"])
        if ev_raw.get("slot_of_objective") is not None:
            ev_raw["slot_of_objective"] = tuple(ev_raw["slot_of_objective"])
        evaluator = EvaluatorSpec(**ev_raw)

        if "output_dir" in raw:
            raw["output_dir"] = _resolve(base_dir, raw["output_dir"])
        config = RunConfig(gep=gep, embedding=embedding, surrogate=surrogate,
                           selection=selection, evaluator=evaluator, **raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run configuration: {exc}") from None

    for label, path in (("feature table", config.embedding.feature_table),
                        ("evaluator case",
                         config.evaluator.case
                         if isinstance(config.evaluator.case, str) else None),
                        ("evaluator table", config.evaluator.table)):
        if path is not None and not Path(path).exists():
            raise ConfigError(f"{label} not found: {path}")
    return config


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return build_run_config(raw, base_dir=path.parent)


# ---------------------------------------------------------------------------
# Records and database


@dataclass(frozen=True)
class EvaluationRecord:
    """One candidate's outcome, as persisted."""

    generation: int
    id: int
    keys: tuple[str, ...]
    embedding: tuple[float, ...]
    objectives: tuple[float, ...]
    converged: bool
    provenance: str
    wall_time: float
    predicted: tuple[float, ...] | None = None

    def to_json(self) -> str:
        payload = dataclasses.asdict(self)
        payload["keys"] = list(self.keys)
        payload["embedding"] = list(self.embedding)
        payload["objectives"] = list(self.objectives)
        payload["predicted"] = (None if self.predicted is None
                                else list(self.predicted))
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EvaluationRecord":
        payload = json.loads(line)
        return cls(generation=int(payload["generation"]),
                   id=int(payload["id"]),
                   keys=tuple(payload["keys"]),
                   embedding=tuple(float(v) for v in payload["embedding"]),
                   objectives=tuple(float(v) for v in payload["objectives"]),
                   converged=bool(payload["converged"]),
                   provenance=str(payload["provenance"]),
                   wall_time=float(payload["wall_time"]),
                   predicted=(None if payload.get("predicted") is None
                              else tuple(float(v) for v in payload["predicted"])))


@dataclass
class EvaluationDatabase:
    """Append-only store of evaluation records, one JSON object per line."""

    records: list[EvaluationRecord] = field(default_factory=list)

    def append(self, record: EvaluationRecord) -> None:
        if self.records:
            last = self.records[-1]
            if (record.generation, record.id) <= (last.generation, last.id):
                raise ValueError("records must arrive in (generation, id) order")
        self.records.append(record)

    def by_generation(self) -> dict[int, list[EvaluationRecord]]:
        out: dict[int, list[EvaluationRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.generation, []).append(rec)
        return out

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "EvaluationDatabase":
        db = cls()
        try:
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        db.append(EvaluationRecord.from_json(line))
        except OSError as exc:
            raise ReplayError(f"cannot read database {path}: {exc}") from None
        except (KeyError, ValueError) as exc:
            raise ReplayError(f"malformed database {path}: {exc}") from None
        return db


# ---------------------------------------------------------------------------
# Run assembly helpers


def build_evaluator(spec: EvaluatorSpec):
    if spec.kind == "channel":
        case = (eval_mod.default_channel_case() if spec.case is None
                else eval_mod.load_channel_case(spec.case))
        return eval_mod.ChannelEvaluator(case)
    table = emb_mod.ingest_feature_table(spec.table)
    return eval_mod.SymbolicBenchmark(table, spec.targets,
                                      spec.slot_of_objective)


def _make_mean_to_objective(log_error: bool) -> Callable[[np.ndarray], np.ndarray]:
    if log_error:
        def transform(mean: np.ndarray) -> np.ndarray:
            return np.power(10.0, np.clip(np.asarray(mean, dtype=float),
                                          -300.0, 300.0))
    else:
        def transform(mean: np.ndarray) -> np.ndarray:
            return np.maximum(np.asarray(mean, dtype=float), 0.0)
    return transform


def _to_gp_targets(objectives: np.ndarray, log_error: bool) -> np.ndarray:
    objs = np.asarray(objectives, dtype=float)
    if log_error:
        return np.log10(np.maximum(objs, _LOG_FLOOR))
    return objs


class _History:
    """Expensive-evaluation memory shared by selection and the surrogate."""

    def __init__(self, dim: int, log_error: bool):
        self.X: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []
        self.diverged: list[np.ndarray] = []
        self.keys: set = set()
        self.dim = dim
        self.log_error = log_error

    def note(self, point: np.ndarray, keys: tuple, objectives: np.ndarray,
             converged: bool) -> None:
        self.keys.add(tuple(keys))
        if converged:
            self.X.append(np.asarray(point, dtype=float))
            self.Y.append(_to_gp_targets(objectives, self.log_error))
        else:
            self.diverged.append(np.asarray(point, dtype=float))

    def selection_view(self) -> sel_mod.SelectionHistory:
        conv = (np.vstack(self.X) if self.X else np.empty((0, self.dim)))
        div = (np.vstack(self.diverged) if self.diverged
               else np.empty((0, self.dim)))
        return sel_mod.SelectionHistory(converged_points=conv,
                                        diverged_points=div,
                                        evaluated_keys=frozenset(self.keys))

    def fit_model(self, settings: SurrogateSettings,
                  rng: np.random.Generator) -> sur_mod.MultiGp:
        if not self.X:
            raise RunError("no converged expensive data to fit the surrogate")
        X = np.vstack(self.X)
        Y = np.vstack(self.Y)
        return sur_mod.fit_multi(X, Y, bounds=settings.bounds,
                                 restarts=settings.restarts, rng=rng)


def _sentinel_flag(candidate: symreg.Candidate, p: int) -> bool:
    """Mark a candidate whose embedding is unusable; returns True if marked."""
    coords = candidate.embedding_norm
    if coords is not None and np.all(np.isfinite(coords)):
        return False
    candidate.objectives = np.full(p, symreg.DIVERGENCE_SENTINEL)
    candidate.converged = False
    candidate.provenance = "surrogate"
    return True


def metrics_from_records(records: Sequence[EvaluationRecord]) -> metrics_mod.RunMetrics:
    """Reconstruct per-generation metrics from stored records alone."""
    if not records:
        raise ValueError("no records to summarize")
    by_gen: dict[int, list[EvaluationRecord]] = {}
    for rec in records:
        by_gen.setdefault(rec.generation, []).append(rec)
    metrics = metrics_mod.RunMetrics()
    expensive_points: list[tuple[float, ...]] = []
    expensive_count = 0
    total = 0
    truth_all: dict[int, np.ndarray] = {}
    pred_all: dict[int, np.ndarray] = {}
    for gen in sorted(by_gen):
        rows = by_gen[gen]
        total += len(rows)
        truth_gen: dict[int, np.ndarray] = {}
        pred_gen: dict[int, np.ndarray] = {}
        for rec in rows:
            if rec.provenance == "expensive":
                expensive_count += 1
                if rec.converged:
                    expensive_points.append(rec.objectives)
                    if rec.predicted is not None:
                        truth_gen[rec.id] = np.asarray(rec.objectives)
                        pred_gen[rec.id] = np.asarray(rec.predicted)
        truth_all.update(truth_gen)
        pred_all.update(pred_gen)
        if expensive_points:
            front = np.asarray(expensive_points, dtype=float)
            coverage = metrics_mod.hypervolume_coverage(front)
            best = tuple(float(v) for v in front.min(axis=0))
        else:
            coverage = 0.0
            p = len(rows[0].objectives)
            best = tuple(float("nan") for _ in range(p))
        metrics.append(metrics_mod.GenerationMetrics(
            generation=gen,
            expensive_cumulative=expensive_count,
            coverage=coverage,
            selection_ratio=expensive_count / total,
            relative_error=metrics_mod.surrogate_relative_error(truth_gen,
                                                                pred_gen),
            best_objectives=best))
    metrics.final_selection_ratio = expensive_count / total
    metrics.final_relative_error = metrics_mod.surrogate_relative_error(
        truth_all, pred_all)
    return metrics


# ---------------------------------------------------------------------------
# Training


def run_training(config: RunConfig) -> tuple[EvaluationDatabase,
                                             metrics_mod.RunMetrics]:
    """Execute a full training run; deterministic per seed."""
    try:
        evaluator = build_evaluator(config.evaluator)
    except (eval_mod.SetupError, emb_mod.IngestError) as exc:
        raise RunError(f"evaluator setup failed: {exc}") from exc

    if config.embedding.feature_table is not None:
        table = emb_mod.ingest_feature_table(config.embedding.feature_table)
        missing = set(evaluator.terminals) - set(table.names)
        if missing:
            raise RunError(f"feature table lacks terminals {sorted(missing)}")
    else:
        table = evaluator.baseline_table()

    symbols = symreg.SymbolSet(operators=config.gep.operators,
                               terminals=tuple(evaluator.terminals),
                               n_constants=config.gep.n_constants)
    gep_config = symreg.GepConfig(symbols=symbols,
                                  head_len=config.gep.head_len,
                                  mutation_rate=config.gep.mutation_rate,
                                  crossover_rate=config.gep.crossover_rate)
    sel_config = config.selection_config()
    p = evaluator.n_objectives
    n_slots = evaluator.n_slots
    to_objective = _make_mean_to_objective(config.surrogate.log_error)

    root = np.random.SeedSequence(config.seed)
    init_ss, pool_ss, evolve_ss, select_ss, fit_ss = root.spawn(5)
    init_rng = np.random.default_rng(init_ss)
    pool = symreg.ConstantsPool.from_seed(
        int(pool_ss.generate_state(1)[0]),
        size=config.gep.n_constants,
        low=config.gep.const_range[0], high=config.gep.const_range[1])
    evolve_rngs = [np.random.default_rng(s)
                   for s in evolve_ss.spawn(config.generations)]
    select_rngs = [np.random.default_rng(s)
                   for s in select_ss.spawn(config.generations)]
    fit_rngs = [np.random.default_rng(s)
                for s in fit_ss.spawn(config.generations)]

    population = [symreg.Candidate(
        genotypes=tuple(symreg.random_genotype(init_rng, gep_config)
                        for _ in range(n_slots)),
        generation=0, id=i) for i in range(config.population)]
    next_id = config.population

    db = EvaluationDatabase()
    history = _History(dim=n_slots, log_error=config.surrogate.log_error)
    norm_stats: emb_mod.NormStats | None = None
    survivors: list[symreg.Candidate] = []

    for gen in range(config.generations):
        if gen == 0:
            current = population
        else:
            ranks = symreg.rank_population(survivors)
            current = symreg.evolve_generation(survivors, ranks,
                                               evolve_rngs[gen], gep_config,
                                               config.offspring, next_id, gen)
            next_id += config.offspring

        trees_by_id: dict[int, list[symreg.ExprTree]] = {}
        for cand in current:
            trees = [symreg.decode(g) for g in cand.genotypes]
            trees_by_id[cand.id] = trees
            cand.phenotype_keys = tuple(symreg.canonical_key(t, pool)
                                        for t in trees)
            cand.embedding = emb_mod.embed(
                trees, table, pool,
                average_inputs_first=config.embedding.average_inputs_first)

        if norm_stats is None:
            finite = [c.embedding for c in current
                      if np.all(np.isfinite(c.embedding))]
            if not finite:
                raise RunError("no usable embeddings in generation 0")
            norm_stats = emb_mod.fit_norm_stats(np.vstack(finite))
        for cand in current:
            cand.embedding_norm = emb_mod.normalize(cand.embedding, norm_stats)
            _sentinel_flag(cand, p)

        if config.surrogate_enabled:
            model = (history.fit_model(config.surrogate, fit_rngs[gen])
                     if gen >= 1 else None)
            decision = sel_mod.select_generation(
                gen, current, model, history.selection_view(), sel_config,
                select_rngs[gen], mean_to_objective=to_objective)
        else:
            selected = sorted(c.id for c in current
                              if np.all(np.isfinite(c.embedding_norm)))
            decision = sel_mod.SelectionDecision(
                selected_ids=selected, values=np.empty((len(current), 0)),
                scalar=np.full(len(current), np.nan),
                weights=np.full(len(current), np.nan),
                front_index=np.full(len(current), -1, dtype=int))

        by_id = {c.id: c for c in current}
        cost_by_id: dict[int, float] = {}
        for cid in decision.selected_ids:
            cand = by_id[cid]
            outcome = evaluator.evaluate(trees_by_id[cid], pool)
            cand.objectives = np.asarray(outcome.objectives, dtype=float)
            cand.converged = outcome.converged
            cand.provenance = "expensive"
            cost_by_id[cid] = float(outcome.cost_units)
            history.note(cand.embedding_norm, cand.phenotype_keys,
                         cand.objectives, cand.converged)

        for cand in sorted(current, key=lambda c: c.id):
            if cand.objectives is None:
                raise RunError(
                    f"candidate {cand.id} left without objectives")
            pred = decision.predicted.get(cand.id)
            db.append(EvaluationRecord(
                generation=gen, id=cand.id,
                keys=tuple(cand.phenotype_keys),
                embedding=tuple(float(v) for v in cand.embedding),
                objectives=tuple(float(v) for v in cand.objectives),
                converged=bool(cand.converged),
                provenance=cand.provenance,
                wall_time=cost_by_id.get(cand.id, 0.0),
                predicted=(None if pred is None
                           else tuple(float(v) for v in pred))))

        survivors = (list(current) if gen == 0
                     else symreg.select_survivors(survivors + current,
                                                  config.population))
        log.info("generation %d: %d expensive, %d total",
                 gen, len(decision.selected_ids), len(current))

    return db, metrics_from_records(db.records)


# ---------------------------------------------------------------------------
# Passive replay


def passive_replay(db: EvaluationDatabase,
                   config: RunConfig) -> metrics_mod.RunMetrics:
    """Emulate a surrogate-assisted run against stored expensive outcomes.

    Walks the stored generations, re-selects with the configured strategy,
    reveals only the selected candidates' stored objectives, and predicts
    the rest; reports selection ratio and relative prediction error against
    the stored truth.  No evaluator is built or called.
    """
    by_gen = db.by_generation()
    if not by_gen:
        raise ReplayError("database is empty")
    gens = sorted(by_gen)
    if gens != list(range(len(gens))):
        raise ReplayError(f"database generations are not contiguous: {gens}")
    for gen, rows in by_gen.items():
        for rec in rows:
            if rec.provenance != "expensive":
                raise ReplayError(
                    "replay needs a baseline database in which every record "
                    f"is expensive (generation {gen}, id {rec.id})")

    sel_config = config.selection_config()
    to_objective = _make_mean_to_objective(config.surrogate.log_error)
    dim = len(by_gen[0][0].embedding)
    p = len(by_gen[0][0].objectives)

    root = np.random.SeedSequence(config.seed)
    _, _, _, select_ss, fit_ss = root.spawn(5)
    select_rngs = [np.random.default_rng(s) for s in select_ss.spawn(len(gens))]
    fit_rngs = [np.random.default_rng(s) for s in fit_ss.spawn(len(gens))]

    gen0_finite = [rec.embedding for rec in by_gen[0]
                   if np.all(np.isfinite(rec.embedding))]
    if not gen0_finite:
        raise ReplayError("no finite generation-0 embeddings in database")
    norm_stats = emb_mod.fit_norm_stats(np.asarray(gen0_finite, dtype=float))

    history = _History(dim=dim, log_error=config.surrogate.log_error)
    metrics = metrics_mod.RunMetrics()
    revealed = 0
    seen_records = 0
    truth_all: dict[int, np.ndarray] = {}
    pred_all: dict[int, np.ndarray] = {}
    revealed_points: list[np.ndarray] = []

    for gen in gens:
        rows = by_gen[gen]
        seen_records += len(rows)
        stand_ins = []
        for rec in rows:
            cand = symreg.Candidate(genotypes=(), generation=gen, id=rec.id,
                                    phenotype_keys=rec.keys,
                                    embedding=np.asarray(rec.embedding))
            cand.embedding_norm = emb_mod.normalize(cand.embedding, norm_stats)
            _sentinel_flag(cand, p)
            stand_ins.append(cand)

        if not config.surrogate_enabled:
            selected = [c.id for c in stand_ins
                        if np.all(np.isfinite(c.embedding_norm))]
            decision = sel_mod.SelectionDecision(
                selected_ids=sorted(selected),
                values=np.empty((len(stand_ins), 0)),
                scalar=np.full(len(stand_ins), np.nan),
                weights=np.full(len(stand_ins), np.nan),
                front_index=np.full(len(stand_ins), -1, dtype=int))
        else:
            model = (history.fit_model(config.surrogate, fit_rngs[gen])
                     if gen >= 1 else None)
            decision = sel_mod.select_generation(
                gen, stand_ins, model, history.selection_view(), sel_config,
                select_rngs[gen], mean_to_objective=to_objective)

        rec_by_id = {rec.id: rec for rec in rows}
        for cid in decision.selected_ids:
            rec = rec_by_id[cid]
            revealed += 1
            point = emb_mod.normalize(np.asarray(rec.embedding), norm_stats)
            history.note(point, rec.keys, np.asarray(rec.objectives),
                         rec.converged)
            if rec.converged:
                revealed_points.append(np.asarray(rec.objectives))

        selected_set = set(decision.selected_ids)
        truth_gen: dict[int, np.ndarray] = {}
        pred_gen: dict[int, np.ndarray] = {}
        for cid, pred in decision.predicted.items():
            rec = rec_by_id[cid]
            if cid in selected_set or not rec.converged:
                continue
            truth_gen[cid] = np.asarray(rec.objectives)
            pred_gen[cid] = pred
        truth_all.update(truth_gen)
        pred_all.update(pred_gen)

        if revealed_points:
            front = np.asarray(revealed_points, dtype=float)
            coverage = metrics_mod.hypervolume_coverage(front)
            best = tuple(float(v) for v in front.min(axis=0))
        else:
            coverage = 0.0
            best = tuple(float("nan") for _ in range(p))
        metrics.append(metrics_mod.GenerationMetrics(
            generation=gen, expensive_cumulative=revealed, coverage=coverage,
            selection_ratio=revealed / seen_records,
            relative_error=metrics_mod.surrogate_relative_error(truth_gen,
                                                                pred_gen),
            best_objectives=best))

    metrics.final_selection_ratio = revealed / len(db.records)
    metrics.final_relative_error = metrics_mod.surrogate_relative_error(
        truth_all, pred_all)
    return metrics
