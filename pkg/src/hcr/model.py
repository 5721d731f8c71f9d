"""Context models: fitting, prediction and train/test evaluation.

A model of order ``k`` over variables ``v_1..v_p`` is a polynomial density
of the vectors

    (v_1(t), ..., v_p(t), v_1(t-1), ..., v_p(t-1), ..., v_p(t-k))

built from the normalized residual series: current values first, then
each lag in turn.  Coefficient multi-indices refer to that layout.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import density as dens
from .basis import BasisSpec
from .errors import InvalidInputError, NonPositiveContextDensityError
from .normalize import (
    KINDS,
    LAPLACE,
    NormalizerParams,
    RawSeries,
    ResidualSeries,
    UniformSeries,
    difference_series,
    fit_normalizers,
    normalize_series,
)

MODEL_FORMAT = "hcr-model/1"
DEFAULT_THRESHOLDS = tuple(range(11))
DEFAULT_TEST_FRACTION = 0.25


@dataclass(frozen=True)
class ModelConfig:
    variables: tuple[str, ...]
    order: int = 0
    degree: int = 9
    normalizer: str = LAPLACE
    prune_sigmas: float | None = None

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables:
            raise InvalidInputError("a model needs at least one variable")
        if len(set(variables)) != len(variables):
            raise InvalidInputError(f"duplicate variables in {variables}")
        if self.order < 0:
            raise InvalidInputError(f"order must be non-negative, got {self.order}")
        if self.normalizer not in KINDS:
            raise InvalidInputError(f"unknown normalizer {self.normalizer!r}; use one of {KINDS}")
        if self.prune_sigmas is not None and not self.prune_sigmas >= 0:
            raise InvalidInputError(f"prune threshold must be >= 0, got {self.prune_sigmas}")
        self.spec.check_cap()

    @property
    def dimension(self) -> int:
        return len(self.variables) * (self.order + 1)

    @property
    def spec(self) -> BasisSpec:
        return BasisSpec(self.dimension, self.degree)

    @property
    def label(self) -> str:
        return f"{'+'.join(self.variables)} order={self.order} degree={self.degree}"


@dataclass(frozen=True, eq=False)
class Model:
    config: ModelConfig
    normalizers: tuple[NormalizerParams, ...]
    coeffs: dens.CoefficientTensor

    def __post_init__(self):
        object.__setattr__(self, "normalizers", tuple(self.normalizers))
        if len(self.normalizers) != len(self.config.variables):
            raise InvalidInputError("one normalizer per model variable is required")
        if self.coeffs.spec.d != self.config.dimension:
            raise InvalidInputError(
                f"coefficients have d={self.coeffs.spec.d}, config implies {self.config.dimension}"
            )


def coordinate_names(variables: Sequence[str], order: int) -> list[str]:
    names = []
    for lag in range(order + 1):
        suffix = "(t)" if lag == 0 else f"(t-{lag})"
        names.extend(f"{v}{suffix}" for v in variables)
    return names


def build_vectors(u: UniformSeries, variables: Sequence[str], order: int) -> np.ndarray:
    """Stack current values and ``order`` lags into rows of length ``p * (order + 1)``.

    Row ``r`` describes time ``t = r + order`` of the series, so the result
    has ``len(u) - order`` rows.
    """
    if order < 0:
        raise InvalidInputError(f"order must be non-negative, got {order}")
    cols = [u.names.index(v) if v in u.names else None for v in variables]
    if None in cols:
        raise InvalidInputError(f"unknown variable(s) among {list(variables)}")
    values = u.values[:, cols]
    n1 = len(values)
    if n1 <= order:
        raise InvalidInputError(f"series of length {n1} is too short for order {order}")
    return np.concatenate([values[order - lag:n1 - lag] for lag in range(order + 1)], axis=1)


def _estimate(config: ModelConfig, vectors: np.ndarray) -> dens.CoefficientTensor:
    coeffs = dens.estimate(vectors, config.spec)
    if config.prune_sigmas is not None:
        coeffs = dens.prune(coeffs, vectors, config.prune_sigmas)
    return coeffs


def fit(config: ModelConfig, raw: RawSeries) -> Model:
    """Residuals, normalizers, uniform series, context vectors, coefficients."""
    residuals = difference_series(raw.select(config.variables))
    normalizers = fit_normalizers(residuals, config.normalizer)
    vectors = build_vectors(normalize_series(residuals, normalizers), config.variables, config.order)
    return Model(config, normalizers, _estimate(config, vectors))


def model_vectors(model: Model, raw: RawSeries) -> np.ndarray:
    """Context vectors of ``raw`` under the model's stored normalizers."""
    residuals = difference_series(raw.select(model.config.variables))
    u = normalize_series(residuals, model.normalizers)
    return build_vectors(u, model.config.variables, model.config.order)


@dataclass(frozen=True)
class Prediction:
    density: float
    point: np.ndarray
    slice: dens.CoefficientTensor | None = None
    slice_normalized: bool = False


def predict_density(model: Model, recent, with_slice: bool = False) -> Prediction:
    """Density at the most recent observation given its context.

    ``recent`` holds raw values of the model's variables (a
    :class:`RawSeries`, or an array with one column per variable), oldest
    row first; at least ``order + 2`` rows are needed.  With ``with_slice``
    the conditional density of the current values given the lags is also
    returned (unnormalized if the context density is not positive).
    """
    config = model.config
    if isinstance(recent, RawSeries):
        values = recent.select(config.variables).values
    else:
        values = np.asarray(recent, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, len(config.variables))
    need = config.order + 2
    if values.shape[0] < need:
        raise InvalidInputError(
            f"order-{config.order} prediction needs {need} rows of history, got {values.shape[0]}"
        )
    raw = RawSeries(config.variables, values[-need:])
    point = model_vectors(model, raw)[-1]
    rho = dens.evaluate(model.coeffs, point)
    if not with_slice:
        return Prediction(rho, point)
    p = len(config.variables)
    ctx = list(range(p, config.dimension))
    try:
        piece = dens.condition_slice(model.coeffs, ctx, point[p:], renormalize=True)
        normalized = True
    except NonPositiveContextDensityError:
        piece = dens.condition_slice(model.coeffs, ctx, point[p:], renormalize=False)
        normalized = False
    return Prediction(rho, point, piece, normalized)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """Predicted densities at held-out observations.

    ``threshold_fractions[i]`` is the share of points with density strictly
    above ``thresholds[i]``; ``negative_fraction`` the share with density
    at or below zero.
    """

    label: str
    sorted_densities: np.ndarray
    thresholds: tuple[float, ...]
    threshold_fractions: tuple[float, ...]
    negative_fraction: float
    n_train: int | None
    n_test: int
    seed: int | None
    config: ModelConfig | None = field(default=None, repr=False)

    @property
    def mean_density(self) -> float:
        return float(np.mean(self.sorted_densities))

    def fraction_above(self, threshold: float) -> float:
        return float(np.mean(self.sorted_densities > threshold))


def _report(label, rho, thresholds, n_train, seed, config) -> EvaluationReport:
    rho = np.asarray(rho, dtype=float)
    if rho.size == 0:
        raise InvalidInputError("evaluation needs at least one test point")
    ordered = np.sort(rho)[::-1].copy()
    ordered.setflags(write=False)
    thresholds = tuple(float(t) for t in thresholds)
    fractions = tuple(float(np.count_nonzero(rho > t)) / rho.size for t in thresholds)
    negative = float(np.count_nonzero(~(rho > 0))) / rho.size
    return EvaluationReport(label, ordered, thresholds, fractions, negative, n_train, rho.size, seed, config)


def evaluate(model: Model, vectors, thresholds=DEFAULT_THRESHOLDS, *, n_train=None, seed=None) -> EvaluationReport:
    """Densities of ``model`` at each test vector, sorted descending."""
    rho = dens.evaluate(model.coeffs, np.atleast_2d(np.asarray(vectors, dtype=float)))
    n_train = model.coeffs.n if n_train is None else n_train
    return _report(model.config.label, rho, thresholds, n_train, seed, model.config)


def holdout_size(n: int, test_fraction: float) -> int:
    """``round(n * test_fraction)`` with ties rounded up."""
    return int(math.floor(n * test_fraction + 0.5))


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random disjoint (train, test) positions, both sorted.

    The permutation comes from ``numpy.random.default_rng(seed)`` (PCG64);
    its first ``holdout_size`` entries form the test set.
    """
    if not 0 < test_fraction < 1:
        raise InvalidInputError(f"test fraction must be in (0, 1), got {test_fraction}")
    k = holdout_size(n, test_fraction)
    if k < 1 or k > n - 1:
        raise InvalidInputError(f"splitting {n} points with fraction {test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[k:]), np.sort(perm[:k])


def split(vectors, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    vectors = np.asarray(vectors)
    train, test = split_indices(len(vectors), test_fraction, seed)
    return vectors[train], vectors[test]


def in_sample_evaluate(config: ModelConfig, raw: RawSeries, thresholds=DEFAULT_THRESHOLDS) -> EvaluationReport:
    """Fit on every vector and evaluate on the same vectors (no hold-out)."""
    model = fit(config, raw)
    return evaluate(model, model_vectors(model, raw), thresholds)


class _HoldoutContext:
    """Residuals and one shared split of target times for many configurations.

    Target times are the residual rows that have a full context under the
    largest order, so every configuration predicts the same test points.
    Normalizers are fitted on the training targets only.
    """

    def __init__(self, raw: RawSeries, max_order: int, test_fraction: float, seed: int, normalizer: str):
        self.residuals: ResidualSeries = difference_series(raw)
        n1 = len(self.residuals)
        if n1 <= max_order + 1:
            raise InvalidInputError(f"{n1} residuals are too few for order {max_order} hold-out evaluation")
        targets = np.arange(max_order, n1)
        train, test = split_indices(len(targets), test_fraction, seed)
        self.train_t = targets[train]
        self.test_t = targets[test]
        self.seed = seed
        self.normalizer = normalizer
        self._uniform = {}

    def uniform(self, variables: tuple[str, ...]):
        if variables not in self._uniform:
            res = self.residuals.select(variables)
            train_res = ResidualSeries(variables, res.values[self.train_t])
            normalizers = fit_normalizers(train_res, self.normalizer)
            self._uniform[variables] = (normalizers, normalize_series(res, normalizers))
        return self._uniform[variables]

    def run(self, config: ModelConfig, thresholds) -> EvaluationReport:
        normalizers, u = self.uniform(config.variables)
        vectors = build_vectors(u, config.variables, config.order)
        train = vectors[self.train_t - config.order]
        test = vectors[self.test_t - config.order]
        model = Model(config, normalizers, _estimate(config, train))
        return evaluate(model, test, thresholds, n_train=len(train), seed=self.seed)


def holdout_evaluate(
    config: ModelConfig,
    raw: RawSeries,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
    thresholds=DEFAULT_THRESHOLDS,
) -> EvaluationReport:
    """Fit on a random training share and evaluate on the held-out rest."""
    ctx = _HoldoutContext(raw.select(config.variables), config.order, test_fraction, seed, config.normalizer)
    return ctx.run(config, thresholds)


def evaluate_matrix(
    raw: RawSeries,
    variable_sets: Sequence[Sequence[str]],
    orders: Sequence[int] = (0, 1, 2),
    degrees: Sequence[int] = tuple(range(1, 10)),
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
    thresholds=DEFAULT_THRESHOLDS,
    normalizer: str = LAPLACE,
    jobs: int = 1,
) -> list[EvaluationReport]:
    """Hold-out reports for every (variables, order, degree) combination.

    All configurations share one split of target times.  Reports come
    back in configuration order (variable set, then order, then degree)
    whatever ``jobs`` is.
    """
    configs = [
        ModelConfig(tuple(v), order, degree, normalizer)
        for v, order, degree in itertools.product(variable_sets, orders, degrees)
    ]
    if not configs:
        raise InvalidInputError("empty configuration matrix")
    used = sorted({name for c in configs for name in c.variables}, key=list(raw.names).index)
    ctx = _HoldoutContext(raw.select(used), max(orders), test_fraction, seed, normalizer)
    for c in configs:
        ctx.uniform(c.variables)
    if jobs <= 1:
        return [ctx.run(c, thresholds) for c in configs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: ctx.run(c, thresholds), configs))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def model_to_dict(model: Model) -> dict:
    c = model.coeffs
    return {
        "format": MODEL_FORMAT,
        "config": {
            "variables": list(model.config.variables),
            "order": model.config.order,
            "degree": model.config.degree,
            "normalizer": model.config.normalizer,
            "prune_sigmas": model.config.prune_sigmas,
        },
        "normalizers": [
            {"name": p.name, "kind": p.kind, "mu": p.mu, "scale": p.scale} for p in model.normalizers
        ],
        "coefficients": {
            "d": c.spec.d,
            "m": c.spec.m,
            "n": c.n,
            "entries": [[idx, val] for idx, val in zip(c.indices.tolist(), c.values.tolist())],
        },
    }


def model_from_dict(data: dict) -> Model:
    if data.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"unsupported model format {data.get('format')!r}; expected {MODEL_FORMAT}")
    try:
        config = ModelConfig(**{**data["config"], "variables": tuple(data["config"]["variables"])})
        normalizers = [
            NormalizerParams(p["kind"], float(p["mu"]), float(p["scale"]), p.get("name", ""))
            for p in data["normalizers"]
        ]
        cdata = data["coefficients"]
        spec = BasisSpec(int(cdata["d"]), int(cdata["m"]))
        entries = cdata["entries"]
        idx = np.array([e[0] for e in entries], dtype=np.int64).reshape(-1, spec.d)
        vals = np.array([e[1] for e in entries], dtype=float)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed model file: {exc}") from exc
    return Model(config, normalizers, dens.CoefficientTensor(spec, idx, vals, cdata.get("n")))


def save_model(model: Model, path) -> None:
    """Write ``model`` as JSON; floats are written with round-trip precision."""
    text = json.dumps(model_to_dict(model), separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> Model:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not a model file ({exc})") from exc
    return model_from_dict(data)
