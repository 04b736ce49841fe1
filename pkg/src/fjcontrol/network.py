"""Social network construction, validation, and serialization.

A :class:`Network` bundles user-to-user influence weights, the recommender
channel weights, per-user stubbornness, and initial sentiment.  Rows of the
augmented weight matrix ``[w | w_rec]`` are substochastic; the built-in
generators produce rows that sum to exactly 1, with all heterogeneity in the
update carried by the stubbornness vector.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betaincinv

GENERATOR_NAME = "equal-weight-bernoulli"
GENERATOR_VERSION = 1

# Bounded retry budget for users that sample an empty in-neighborhood.
_MAX_EDGE_RESAMPLES = 100

# Fixed topology seed for the 6-user radical network.  Chosen so that every
# user hears the recommender and the radical user (index 4) has outgoing
# influence on three other users.
NETWORK_B_SEED = 5

NETWORK_B_X0 = (0.33, 0.26, 0.17, 0.32, 1.00, 0.41)
RADICAL_USER = 4

_TOL = 1e-12


class NetworkGenerationError(RuntimeError):
    """A user kept an empty in-neighborhood after the resample budget."""


@dataclass(frozen=True)
class Network:
    """Immutable social network with a single broadcast recommender channel.

    Fields:
        n: number of users.
        w: (n, n) user-to-user influence weights, zero diagonal.
        w_rec: (n,) recommender-to-user influence weights.
        lambda_stub: (n,) per-user stubbornness in [0, 1].
        x0: (n,) initial sentiment in [0, 1].
    """

    n: int
    w: np.ndarray
    w_rec: np.ndarray
    lambda_stub: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        w_rec = np.array(self.w_rec, dtype=float)
        lam = np.array(self.lambda_stub, dtype=float)
        x0 = np.array(self.x0, dtype=float)
        n = int(self.n)
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if w.shape != (n, n):
            raise ValueError(f"w must have shape ({n}, {n}), got {w.shape}")
        for name, vec in (("w_rec", w_rec), ("lambda_stub", lam), ("x0", x0)):
            if vec.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {vec.shape}")
        for arr in (w, w_rec, lam, x0):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "w_rec", w_rec)
        object.__setattr__(self, "lambda_stub", lam)
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """Diagnostics from :func:`validate_network`.

    ``violations`` break the Network invariants; ``warnings`` are benign
    observations (e.g. an isolated user, which is legal for a fully
    stubborn node).  The report is empty iff all invariants hold.
    """

    violations: tuple[ValidationIssue, ...] = ()
    warnings: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "violations": [{"code": v.code, "message": v.message} for v in self.violations],
            "warnings": [{"code": w.code, "message": w.message} for w in self.warnings],
        }


def validate_network(net: Network) -> ValidationReport:
    """Report substochasticity residuals, range violations, and isolated users."""
    violations: list[ValidationIssue] = []
    warnings: list[ValidationIssue] = []

    def _range_check(name, arr):
        if np.any(arr < -_TOL) or np.any(arr > 1.0 + _TOL):
            bad = int(np.argmax((arr < -_TOL) | (arr > 1.0 + _TOL)))
            violations.append(ValidationIssue(
                "entry-range",
                f"{name} entry {bad} = {float(arr.reshape(-1)[bad]):.6g} outside [0, 1]",
            ))

    _range_check("w", net.w.reshape(-1))
    _range_check("w_rec", net.w_rec)
    _range_check("lambda_stub", net.lambda_stub)
    _range_check("x0", net.x0)

    row_sums = net.w.sum(axis=1) + net.w_rec
    for i in np.nonzero(row_sums > 1.0 + _TOL)[0]:
        violations.append(ValidationIssue(
            "row-sum",
            f"row {i} sums to {float(row_sums[i]):.6g}, "
            f"excess {float(row_sums[i] - 1.0):.6g}",
        ))

    diag = np.diagonal(net.w)
    for i in np.nonzero(np.abs(diag) > _TOL)[0]:
        violations.append(ValidationIssue(
            "self-loop",
            f"self-loop violation at index {i}: w[{i}][{i}] = {float(diag[i]):.6g}",
        ))

    for i in np.nonzero(row_sums <= _TOL)[0]:
        warnings.append(ValidationIssue(
            "isolated-user",
            f"user {i} has no incoming influence (all-zero row)",
        ))

    return ValidationReport(tuple(violations), tuple(warnings))


def _user_rng(seed: int, n: int) -> list[np.random.Generator]:
    # One substream per user: adding users never reshuffles earlier draws.
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def generate_network_a(
    n: int,
    kappa_u: float,
    kappa_r: float,
    lambda_low: float,
    lambda_high: float,
    beta_alpha: float,
    beta_beta: float,
    seed: int,
) -> Network:
    """Random network with Bernoulli edges and equal in-neighborhood weights.

    Each directed user-user edge (i, j), i != j, exists independently with
    probability ``kappa_u``; each recommender edge with probability
    ``kappa_r``.  All realized in-edges of a user (recommender included)
    receive equal weight, so every generated row sums to exactly 1.
    Stubbornness is uniform on [lambda_low, lambda_high]; initial sentiment
    is Beta(beta_alpha, beta_beta) via the inverse-CDF transform, which keeps
    draws reproducible across library versions.

    RNG scheme (version 1): user i consumes child i of
    ``SeedSequence(seed)``.  Draw order per user: n+1 edge uniforms (user
    slots 0..n-1, then the recommender slot), resampled wholesale while the
    in-neighborhood is empty; one uniform for stubbornness; one uniform for
    the Beta inverse CDF.

    Raises NetworkGenerationError if a user stays isolated after the
    bounded resample budget.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not (0.0 < kappa_u <= 1.0) or not (0.0 < kappa_r <= 1.0):
        raise ValueError("kappa_u and kappa_r must be in (0, 1]")
    if not (0.0 <= lambda_low <= lambda_high <= 1.0):
        raise ValueError("need 0 <= lambda_low <= lambda_high <= 1")
    if beta_alpha <= 0 or beta_beta <= 0:
        raise ValueError("beta parameters must be positive")

    w = np.zeros((n, n))
    w_rec = np.zeros(n)
    lam = np.zeros(n)
    x0 = np.zeros(n)

    for i, rng in enumerate(_user_rng(seed, n)):
        for _ in range(_MAX_EDGE_RESAMPLES):
            edge_u = rng.random(n + 1)
            user_in = edge_u[:n] < kappa_u
            user_in[i] = False
            rec_in = bool(edge_u[n] < kappa_r)
            if user_in.any() or rec_in:
                break
        else:
            raise NetworkGenerationError(
                f"user {i} has no incoming edges after {_MAX_EDGE_RESAMPLES} resamples "
                f"(kappa_u={kappa_u}, kappa_r={kappa_r}); an isolated user would break "
                "the generator's row-sum-1 contract"
            )
        k = int(user_in.sum()) + int(rec_in)
        w[i, user_in] = 1.0 / k
        if rec_in:
            w_rec[i] = 1.0 / k
        lam[i] = lambda_low + (lambda_high - lambda_low) * rng.random()
        x0[i] = float(betaincinv(beta_alpha, beta_beta, rng.random()))

    return Network(n=n, w=w, w_rec=w_rec, lambda_stub=lam, x0=x0)


def network_b() -> Network:
    """Fixed 6-user radical network.

    Topology and non-radical stubbornness come from the standard generator
    under a fixed seed; the initial sentiment is overridden with the fixed
    vector and the radical user (index 4, initial sentiment 1.0) gets
    stubbornness 1.0 so it never moves.
    """
    base = generate_network_a(
        n=6, kappa_u=0.25, kappa_r=0.80,
        lambda_low=0.00, lambda_high=0.05,
        beta_alpha=7.0, beta_beta=2.0,
        seed=NETWORK_B_SEED,
    )
    lam = base.lambda_stub.copy()
    lam[RADICAL_USER] = 1.0
    return Network(
        n=6, w=base.w, w_rec=base.w_rec,
        lambda_stub=lam, x0=np.array(NETWORK_B_X0),
    )


def save_network(net: Network, path, metadata: dict | None = None) -> None:
    """Write a network to a JSON file.

    Floats are stored as shortest round-trip decimals (at most 17
    significant digits), so load(save(net)) reproduces every value
    bit-exactly.
    """
    doc = {
        "n": net.n,
        "w": [[float(v) for v in row] for row in net.w],
        "w_rec": [float(v) for v in net.w_rec],
        "lambda": [float(v) for v in net.lambda_stub],
        "x0": [float(v) for v in net.x0],
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_network(path) -> Network:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return Network(
            n=int(doc["n"]),
            w=np.array(doc["w"], dtype=float),
            w_rec=np.array(doc["w_rec"], dtype=float),
            lambda_stub=np.array(doc["lambda"], dtype=float),
            x0=np.array(doc["x0"], dtype=float),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing network field {exc}") from exc


def load_network_metadata(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc.get("metadata", {})
