"""Scored content corpus: synthesis, ingestion, scheduling, and selection.

Each item carries a truth label, six affective dimension scores, an
aggregated extremity score in [0, 1], and an appearance time step.  A corpus
is immutable once scheduled; eligibility filtering and discrete selection
are pure reads, so parallel runs may share one scheduled corpus.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betaincinv

from .costs import CostParams

DIMENSION_NAMES = ("fear", "disgust", "anxiety", "shock", "negativity", "subjectivity")
DIMENSION_WEIGHTS = (0.15, 0.15, 0.15, 0.15, 0.20, 0.20)

_SCORE_TOL = 1e-9
_INGEST_SCORE_TOL = 1e-6


class CorpusFormatError(ValueError):
    """A corpus file failed to parse or failed row-level validation."""


class NoEligibleContentError(LookupError):
    """No candidate content was available for selection."""


def aggregate_score(dims) -> float:
    """Weighted emotional extremity: 0.15 on each of the four discrete
    emotions, 0.20 on overall negativity and on subjectivity."""
    vals = [float(v) for v in dims]
    if len(vals) != 6:
        raise ValueError(f"expected 6 dimension scores, got {len(vals)}")
    for name, v in zip(DIMENSION_NAMES, vals):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"dimension {name} = {v} outside [0, 1]")
    return sum(w * v for w, v in zip(DIMENSION_WEIGHTS, vals))


@dataclass(frozen=True)
class ContentItem:
    id: str
    label: str                         # "true" | "false"
    dims: tuple[float, ...] | None     # six scores, or None if only the
                                       # aggregate was supplied
    score: float
    t_c: int = 0

    def __post_init__(self):
        if self.label not in ("true", "false"):
            raise ValueError(f"label must be 'true' or 'false', got {self.label!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.t_c < 0:
            raise ValueError(f"t_c must be >= 0, got {self.t_c}")
        if self.dims is not None:
            dims = tuple(float(v) for v in self.dims)
            if abs(aggregate_score(dims) - self.score) > _SCORE_TOL:
                raise ValueError(
                    f"item {self.id}: score {self.score} does not match its "
                    f"dimension aggregate {aggregate_score(dims)}"
                )
            object.__setattr__(self, "dims", dims)

    @property
    def is_false(self) -> bool:
        return self.label == "false"


@dataclass(frozen=True)
class Corpus:
    items: tuple[ContentItem, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        items = tuple(self.items)
        ids = [item.id for item in items]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise ValueError(f"duplicate content id {dup!r}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "_by_id", {item.id: item for item in items})

    def __len__(self) -> int:
        return len(self.items)

    def item_by_id(self, item_id: str) -> ContentItem:
        return self._by_id[item_id]


def synthesize_corpus(
    n_items: int = 4000,
    false_fraction: float = 0.5,
    false_mean: float = 0.537,
    true_mean: float = 0.379,
    concentration: float = 10.0,
    seed: int = 0,
) -> Corpus:
    """Statistics-matched synthetic corpus.

    Scores are Beta draws with shape (mean * concentration,
    (1 - mean) * concentration), sampled by pushing uniforms through the
    Beta inverse CDF so corpora reproduce across library versions.  False
    items come first (ids are zero-padded and sequential), each dimension
    vector is the score replicated six ways, and every t_c starts at 0
    until :func:`schedule_appearances` assigns appearance times.
    """
    if n_items < 0:
        raise ValueError(f"n_items must be >= 0, got {n_items}")
    if not 0.0 <= false_fraction <= 1.0:
        raise ValueError(f"false_fraction must be in [0, 1], got {false_fraction}")
    for name, mean in (("false_mean", false_mean), ("true_mean", true_mean)):
        if not 0.0 < mean < 1.0:
            raise ValueError(f"{name} must be in (0, 1), got {mean}")
    if concentration <= 0:
        raise ValueError(f"concentration must be > 0, got {concentration}")

    rng = np.random.Generator(np.random.PCG64(seed))
    n_false = round(n_items * false_fraction)
    width = max(1, len(str(max(n_items - 1, 1))))

    def _draw(mean, count):
        a = mean * concentration
        b = (1.0 - mean) * concentration
        return betaincinv(a, b, rng.random(count))

    scores = np.concatenate([_draw(false_mean, n_false), _draw(true_mean, n_items - n_false)])
    items = []
    for i, score in enumerate(scores):
        # Store the aggregate of the replicated dimensions (not the raw draw)
        # so serialized corpora re-ingest to identical items.
        dims = (float(score),) * 6
        items.append(ContentItem(
            id=f"syn{i:0{width}d}",
            label="false" if i < n_false else "true",
            dims=dims,
            score=aggregate_score(dims),
        ))
    metadata = {
        "source": "synthetic",
        "seed": seed,
        "size": n_items,
        "false_fraction": false_fraction,
        "false_mean": false_mean,
        "true_mean": true_mean,
        "concentration": concentration,
    }
    return Corpus(items=tuple(items), metadata=metadata)


_FULL_HEADER = ["id", "label", *DIMENSION_NAMES, "score"]
_MIN_HEADER = ["id", "label", "score"]


def ingest_corpus(path) -> Corpus:
    """Read a corpus CSV.

    Header is either ``id,label,fear,...,subjectivity,score[,t_c]`` or the
    minimal ``id,label,score[,t_c]``.  Rows with all six dimension cells
    present get their score recomputed from the dimensions; a stored score
    deviating by more than 1e-6 is rejected.  Rows with all dimension cells
    empty are accepted on the stored score alone.  Errors carry the
    offending row number.
    """
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusFormatError(f"{path}: empty file (no header)") from None
        header = [h.strip() for h in header]
        if header in (_FULL_HEADER, _FULL_HEADER + ["t_c"]):
            has_dims = True
        elif header in (_MIN_HEADER, _MIN_HEADER + ["t_c"]):
            has_dims = False
        else:
            raise CorpusFormatError(f"{path}: unrecognized header {header}")
        has_tc = header[-1] == "t_c"

        items = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusFormatError(
                    f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                items.append(_parse_row(row, has_dims, has_tc, row_no))
            except CorpusFormatError:
                raise
            except (ValueError, TypeError) as exc:
                raise CorpusFormatError(f"{path}: row {row_no}: {exc}") from exc

    metadata = {"source": "ingested", "path": str(path), "size": len(items)}
    try:
        return Corpus(items=tuple(items), metadata=metadata)
    except ValueError as exc:
        raise CorpusFormatError(f"{path}: {exc}") from exc


def _parse_row(row: list[str], has_dims: bool, has_tc: bool, row_no: int) -> ContentItem:
    item_id = row[0].strip()
    if not item_id:
        raise ValueError("empty id")
    label = row[1].strip()
    if has_dims:
        dim_cells = [c.strip() for c in row[2:8]]
        score_cell = row[8].strip()
    else:
        dim_cells = []
        score_cell = row[2].strip()
    t_c = int(row[-1]) if has_tc and row[-1].strip() else 0

    stored_score = float(score_cell)
    if has_dims and any(dim_cells):
        if not all(dim_cells):
            raise ValueError("row mixes present and missing dimension cells")
        dims = tuple(float(c) for c in dim_cells)
        computed = aggregate_score(dims)
        if abs(computed - stored_score) > _INGEST_SCORE_TOL:
            raise CorpusFormatError(
                f"row {row_no}: stored score {stored_score} deviates from the "
                f"dimension aggregate {computed} by more than {_INGEST_SCORE_TOL}"
            )
        return ContentItem(id=item_id, label=label, dims=dims, score=computed, t_c=t_c)
    return ContentItem(id=item_id, label=label, dims=None, score=stored_score, t_c=t_c)


def write_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the ingestion CSV format (t_c column included)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FULL_HEADER + ["t_c"])
        for item in corpus.items:
            dim_cells = (
                [format(v, ".17g") for v in item.dims] if item.dims is not None
                else [""] * 6
            )
            writer.writerow(
                [item.id, item.label, *dim_cells, format(item.score, ".17g"), item.t_c]
            )


def schedule_appearances(corpus: Corpus, tau: int, seed: int) -> Corpus:
    """Assign each item an appearance time uniform on {0, ..., tau-1}.

    Returns a new corpus; the input is untouched.  Uniform integers come
    from floor(tau * uniform) so schedules reproduce across versions.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = np.floor(rng.random(len(corpus)) * tau).astype(int)
    items = tuple(
        ContentItem(id=i.id, label=i.label, dims=i.dims, score=i.score, t_c=int(tc))
        for i, tc in zip(corpus.items, draws)
    )
    metadata = dict(corpus.metadata)
    metadata["schedule"] = {"tau": tau, "seed": seed}
    return Corpus(items=items, metadata=metadata)


def eligible(corpus: Corpus, t: int, z: int) -> tuple[ContentItem, ...]:
    """Items that have appeared and are still inside the content window."""
    return tuple(item for item in corpus.items if item.t_c <= t <= item.t_c + z)


def select_discrete(
    x,
    u_target: float,
    candidates,
    t: int,
    params: CostParams,
) -> ContentItem:
    """Pick the candidate whose score minimizes the mitigation cost at x.

    Each candidate is priced with its own age t - t_c.  Ties prefer newer
    items (larger t_c), then lexicographically smaller ids.  ``u_target``
    (the continuous controller output) is accepted for diagnostics; the
    decision is the full cost minimization.
    """
    candidates = tuple(candidates)
    if not candidates:
        raise NoEligibleContentError(f"no eligible content at t={t}")
    x = np.asarray(x, dtype=float)
    n = x.size
    scores = np.array([c.score for c in candidates])
    ages = np.array([t - c.t_c for c in candidates])
    if np.any(ages < 0) or np.any(ages > params.window_z):
        raise ValueError("candidates must be pre-filtered for eligibility")
    engagement = np.sum((x[None, :] - scores[:, None]) ** 2, axis=1)
    penalty = params.rho * n * scores ** 2 * np.exp(-params.delta_novelty * ages)
    costs = engagement + penalty
    best = min(
        range(len(candidates)),
        key=lambda i: (costs[i], -candidates[i].t_c, candidates[i].id),
    )
    return candidates[best]
