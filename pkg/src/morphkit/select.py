# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Per-tag linguistic feature selection.

A genetic algorithm searches bit masks over the feature pool. Each mask is
scored by cross-validating a small random forest on the selected columns,
minus a penalty proportional to the fraction of the pool it keeps. The best
mask found for a tag is written as a mask file the model reads.
"""

import itertools
import logging
import math
import threading
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from morphkit.corpus import Sentence, TagDomains
from morphkit.lingfeat import FEATURE_POOL, FeatureMask, PhonoTable, sentence_features
from morphkit.logs import plural
from morphkit.output import read_yaml, write_csv, write_yaml

logger = logging.getLogger(__name__)

Bits = tuple[int, ...]
FitnessMetric = Literal["micro-f1", "accuracy"]

#: Largest pool :func:`exhaustive_search` will enumerate.
MAX_EXHAUSTIVE_POOL = 20


def gini(labels: Sequence[int] | np.ndarray) -> float:
    """Gini impurity ``1 - sum(p_c ** 2)`` of a label multiset."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("Gini impurity of an empty label set is undefined")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class RFConfig:
    trees: int = 15
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Literal["sqrt", "all"] = "sqrt"
    max_depth: int | None = None

    def __post_init__(self) -> None:
        if self.trees < 1:
            raise ValueError(f"A forest needs at least one tree, got {self.trees}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_features not in ("sqrt", "all"):
            raise ValueError(f"max_features must be 'sqrt' or 'all', got {self.max_features!r}")

    def candidate_count(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        return max(1, math.ceil(math.sqrt(n_features)))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    n_classes: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict_proba(X) for tree in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _best_split(
    X: np.ndarray, y: np.ndarray, n_classes: int, feature: int, min_leaf: int
) -> tuple[float, float] | None:
    """Lowest weighted child impurity over midpoints of ``feature``, if any split is legal."""
    n = len(y)
    if n < 2:
        return None
    order = np.argsort(X[:, feature], kind="stable")
    values = X[order, feature]
    one_hot = np.eye(n_classes)[y[order]]
    left_counts = np.cumsum(one_hot, axis=0)[:-1]
    right_counts = left_counts[-1] + one_hot[-1] - left_counts
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    legal = (values[:-1] < values[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not legal.any():
        return None
    gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
    gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
    impurity = (n_left * gini_left + n_right * gini_right) / n
    impurity[~legal] = np.inf
    i = int(np.argmin(impurity))
    return float(impurity[i]), float((values[i] + values[i + 1]) / 2)


def _fit_tree(
    X: np.ndarray, y: np.ndarray, n_classes: int, cfg: RFConfig, rng: np.random.Generator
) -> DecisionTree:
    n_features = X.shape[1]
    k = cfg.candidate_count(n_features)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[rows], minlength=n_classes) / len(rows))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        labels = y[rows]
        if (
            len(rows) < cfg.min_samples_split
            or np.all(labels == labels[0])
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            continue
        # Draw k candidates; if none of them splits, keep looking at the rest.
        order = rng.permutation(n_features)
        best: tuple[float, int, float] | None = None
        for position, f in enumerate(order):
            if position >= k and best is not None:
                break
            split = _best_split(X[rows], labels, n_classes, int(f), cfg.min_samples_leaf)
            if split is not None and (best is None or split[0] < best[0]):
                best = (split[0], int(f), split[1])
        if best is None:
            continue
        _, f, t = best
        go_left = X[rows, f] <= t
        left_rows, right_rows = rows[go_left], rows[~go_left]
        feature[node] = f
        threshold[node] = t
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64).reshape(len(feature), n_classes),
    )


def rf_fit(
    X: np.ndarray,
    y: np.ndarray,
    cfg: RFConfig,
    rng: np.random.Generator,
    n_classes: int | None = None,
) -> RandomForest:
    """Grow ``cfg.trees`` gini trees, each on a bootstrap sample of the rows.

    Raises:
        ValueError: If there are fewer than two rows or ``X`` and ``y`` disagree
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"Feature matrix {X.shape} does not match {len(y)} labels")
    if len(y) < 2:
        raise ValueError(f"A random forest needs at least 2 rows, got {len(y)}")
    classes = int(n_classes if n_classes is not None else y.max() + 1)
    trees = []
    for _ in range(cfg.trees):
        sample = rng.integers(0, len(y), size=len(y))
        trees.append(_fit_tree(X[sample], y[sample], classes, cfg, rng))
    return RandomForest(tuple(trees), classes)


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Raw-code feature rows and gold label ids of one tag."""

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] = FEATURE_POOL
    n_classes: int = 0
    tag: str = ""

    def __post_init__(self) -> None:
        if self.X.shape != (len(self.y), len(self.names)):
            raise ValueError(
                f"Feature matrix {self.X.shape} does not match {len(self.y)} rows "
                f"of {len(self.names)} features"
            )

    def __len__(self) -> int:
        return len(self.y)


def build_feature_dataset(
    sentences: Sequence[Sentence],
    tag: str,
    domains: TagDomains,
    table: PhonoTable,
) -> FeatureDataset:
    """Feature rows for every token, labelled with its ``tag`` id."""
    if not sentences:
        raise ValueError("Cannot select features on an empty corpus")
    domain = domains[tag]
    rows = [sentence_features(s.surfaces, table, encoding="codes") for s in sentences]
    labels = [domain.index(token.tags.get(tag)) for s in sentences for token in s.tokens]
    return FeatureDataset(
        X=np.concatenate(rows, axis=0),
        y=np.array(labels, dtype=np.int64),
        names=FEATURE_POOL,
        n_classes=domain.n_classes,
        tag=tag,
    )


@dataclass(frozen=True)
class GAConfig:
    generations: int = 30
    population: int = 60
    crossover_prob: float = 0.7
    mutation_prob: float = 0.03
    tournament_size: int = 2
    elites: int = 1
    alpha: float = 0.05
    folds: int = 3
    metric: FitnessMetric = "micro-f1"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("crossover_prob", "mutation_prob"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.generations < 1 or self.population < 1:
            raise ValueError("generations and population must be >= 1")
        if self.tournament_size < 1:
            raise ValueError(f"tournament_size must be >= 1, got {self.tournament_size}")
        if not 0 <= self.elites <= self.population:
            raise ValueError(f"elites must be in [0, population], got {self.elites}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.folds < 2:
            raise ValueError(f"Cross validation needs at least 2 folds, got {self.folds}")
        if self.metric not in ("micro-f1", "accuracy"):
            raise ValueError(f"Unknown fitness metric {self.metric!r}")


@dataclass(frozen=True)
class Chromosome:
    bits: Bits
    fitness: float | None = None
    score: float | None = None

    @property
    def count(self) -> int:
        return sum(self.bits)

    @property
    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    def to_mask(self, pool: Sequence[str] = FEATURE_POOL) -> FeatureMask:
        return FeatureMask(tuple(pool), self.bits)


def _micro_f1(predicted: np.ndarray, gold: np.ndarray) -> float:
    """F1 from true/false positive and false negative counts pooled over classes."""
    classes = np.union1d(predicted, gold)
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((predicted == c) & (gold == c)))
        fp += int(np.sum((predicted == c) & (gold != c)))
        fn += int(np.sum((predicted != c) & (gold == c)))
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def cross_validated_score(
    bits: Bits,
    dataset: FeatureDataset,
    rf_cfg: RFConfig,
    *,
    folds: int = 3,
    seed: int = 0,
    metric: FitnessMetric = "micro-f1",
) -> float:
    """Pooled out-of-fold score of a forest on the columns ``bits`` selects.

    An empty mask is scored by predicting each training fold's majority class.
    """
    n = len(dataset)
    if n < folds:
        raise ValueError(f"{n} rows cannot be split into {folds} folds")
    selected = np.flatnonzero(np.array(bits, dtype=bool))
    fold_rows = np.array_split(np.random.default_rng(seed).permutation(n), folds)
    predicted = np.empty(n, dtype=np.int64)
    for k, test_rows in enumerate(fold_rows):
        train_rows = np.concatenate([rows for j, rows in enumerate(fold_rows) if j != k])
        y_train = dataset.y[train_rows]
        if selected.size == 0 or np.all(y_train == y_train[0]):
            predicted[test_rows] = int(np.argmax(np.bincount(y_train)))
            continue
        forest = rf_fit(
            dataset.X[np.ix_(train_rows, selected)],
            y_train,
            rf_cfg,
            np.random.default_rng([seed, k]),
            n_classes=max(dataset.n_classes, int(dataset.y.max()) + 1),
        )
        predicted[test_rows] = forest.predict(dataset.X[np.ix_(test_rows, selected)])
    if metric == "accuracy":
        return float(np.mean(predicted == dataset.y))
    return _micro_f1(predicted, dataset.y)


def fitness(
    bits: Bits,
    dataset: FeatureDataset,
    rf_cfg: RFConfig,
    *,
    folds: int = 3,
    seed: int = 0,
    alpha: float = 0.05,
    metric: FitnessMetric = "micro-f1",
) -> float:
    """Cross-validated score minus ``alpha`` times the fraction of the pool kept."""
    if len(bits) != len(dataset.names):
        raise ValueError(f"Mask has {len(bits)} bits for a pool of {len(dataset.names)}")
    score = cross_validated_score(
        bits, dataset, rf_cfg, folds=folds, seed=seed, metric=metric
    )
    return score - alpha * sum(bits) / len(bits)


FitnessFn = Callable[[Bits], Chromosome]


class FitnessOracle:
    """Memoizing, optionally parallel evaluator of chromosomes.

    The wrapped function must be pure: the same bits always score the same, so
    a cached result can stand in for a fresh one.
    """

    def __init__(self, evaluate: FitnessFn, jobs: int = 1) -> None:
        if jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {jobs}")
        self._evaluate = evaluate
        self._jobs = jobs
        self._cache: dict[Bits, Chromosome] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @classmethod
    def for_dataset(
        cls,
        dataset: FeatureDataset,
        rf_cfg: RFConfig,
        ga_cfg: GAConfig,
        jobs: int = 1,
    ) -> "FitnessOracle":
        def evaluate(bits: Bits) -> Chromosome:
            score = cross_validated_score(
                bits,
                dataset,
                rf_cfg,
                folds=ga_cfg.folds,
                seed=ga_cfg.seed,
                metric=ga_cfg.metric,
            )
            penalty = ga_cfg.alpha * sum(bits) / len(bits)
            return Chromosome(bits, score - penalty, score)

        return cls(evaluate, jobs)

    @classmethod
    def from_function(cls, f: Callable[[Bits], float], jobs: int = 1) -> "FitnessOracle":
        def evaluate(bits: Bits) -> Chromosome:
            value = f(bits)
            return Chromosome(bits, value, value)

        return cls(evaluate, jobs)

    def __call__(self, bits: Bits) -> Chromosome:
        return self.evaluate_many([bits])[0]

    def evaluate_many(self, population: Sequence[Bits]) -> list[Chromosome]:
        with self._lock:
            missing = list(dict.fromkeys(b for b in population if b not in self._cache))
            self.hits += len(population) - len(missing)
            self.misses += len(missing)
        if missing:
            if self._jobs > 1 and len(missing) > 1:
                with ThreadPoolExecutor(max_workers=self._jobs) as executor:
                    results = list(executor.map(self._evaluate, missing))
            else:
                results = [self._evaluate(b) for b in missing]
            with self._lock:
                for bits, result in zip(missing, results, strict=True):
                    self._cache[bits] = result
        logger.debug(
            f"Fitness batch: {len(missing)} new, {len(population) - len(missing)} cached"
        )
        return [self._cache[b] for b in population]

    @property
    def evaluated(self) -> list[Chromosome]:
        with self._lock:
            return list(self._cache.values())


@dataclass(frozen=True)
class FitnessReport:
    """Per-generation best-ever and mean fitness; index 0 is the initial population."""

    best_per_generation: tuple[float, ...]
    mean_per_generation: tuple[float, ...]
    best: Chromosome
    evaluations: int = 0
    cache_hits: int = 0
    evaluated: tuple[Chromosome, ...] = field(default=(), repr=False)


def _tournament(
    fits: np.ndarray, size: int, rng: np.random.Generator
) -> int:
    entrants = rng.integers(0, len(fits), size=size)
    return int(entrants[np.argmax(fits[entrants])])


def _crossover(a: Bits, b: Bits, prob: float, rng: np.random.Generator) -> tuple[Bits, Bits]:
    if len(a) < 2 or rng.random() >= prob:
        return a, b
    point = int(rng.integers(1, len(a)))
    return a[:point] + b[point:], b[:point] + a[point:]


def _mutate(bits: Bits, prob: float, rng: np.random.Generator) -> Bits:
    flips = rng.random(len(bits)) < prob
    if not flips.any():
        return bits
    return tuple(int(b ^ f) for b, f in zip(bits, flips, strict=True))


def ga_run(
    dataset: FeatureDataset | None,
    pool_size: int,
    ga_cfg: GAConfig,
    rf_cfg: RFConfig | None = None,
    *,
    oracle: FitnessOracle | None = None,
    initial_population: Sequence[Bits] | None = None,
    jobs: int = 1,
) -> tuple[Chromosome, FitnessReport]:
    """Evolve feature masks and return the best one ever evaluated.

    Each generation keeps ``ga_cfg.elites`` best individuals unchanged and
    fills the rest with tournament-selected parents under single-point
    crossover and per-bit mutation. ``oracle`` replaces the forest-based
    fitness, which needs ``dataset``.
    """
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    if oracle is None:
        if dataset is None:
            raise ValueError("ga_run needs a dataset or a fitness oracle")
        oracle = FitnessOracle.for_dataset(dataset, rf_cfg or RFConfig(), ga_cfg, jobs)

    rng = np.random.default_rng(ga_cfg.seed)
    if initial_population is not None:
        population = [tuple(int(b) for b in bits) for bits in initial_population]
        if any(len(bits) != pool_size for bits in population):
            raise ValueError(f"Initial population members must have {pool_size} bits")
    else:
        population = [
            tuple(int(b) for b in rng.integers(0, 2, size=pool_size))
            for _ in range(ga_cfg.population)
        ]
    size = len(population)

    scored = oracle.evaluate_many(population)
    fits = np.array([c.fitness for c in scored], dtype=np.float64)
    best = scored[int(np.argmax(fits))]
    best_trace = [float(best.fitness)]  # type: ignore[arg-type]
    mean_trace = [float(np.mean(fits))]

    for generation in range(1, ga_cfg.generations + 1):
        elite_rows = np.argsort(-fits, kind="stable")[: ga_cfg.elites]
        children: list[Bits] = [population[i] for i in elite_rows]
        while len(children) < size:
            a = population[_tournament(fits, ga_cfg.tournament_size, rng)]
            b = population[_tournament(fits, ga_cfg.tournament_size, rng)]
            a, b = _crossover(a, b, ga_cfg.crossover_prob, rng)
            children.append(_mutate(a, ga_cfg.mutation_prob, rng))
            if len(children) < size:
                children.append(_mutate(b, ga_cfg.mutation_prob, rng))
        population = children
        scored = oracle.evaluate_many(population)
        fits = np.array([c.fitness for c in scored], dtype=np.float64)
        leader = scored[int(np.argmax(fits))]
        if leader.fitness > best.fitness:  # type: ignore[operator]
            best = leader
        best_trace.append(float(best.fitness))  # type: ignore[arg-type]
        mean_trace.append(float(np.mean(fits)))
        logger.debug(
            f"Generation {generation}: best {best.fitness:.4f}, mean {mean_trace[-1]:.4f}"
        )

    logger.info(
        f"Feature search kept {best.count} of {pool_size} feature{plural(pool_size)} "
        f"(fitness {best.fitness:.4f}, {oracle.misses} evaluation{plural(oracle.misses)})"
    )
    report = FitnessReport(
        best_per_generation=tuple(best_trace),
        mean_per_generation=tuple(mean_trace),
        best=best,
        evaluations=oracle.misses,
        cache_hits=oracle.hits,
        evaluated=tuple(oracle.evaluated),
    )
    return best, report


def exhaustive_search(oracle: FitnessOracle, pool_size: int) -> Chromosome:
    """Score every mask of ``pool_size`` bits; the first best in enumeration order wins."""
    if pool_size > MAX_EXHAUSTIVE_POOL:
        raise ValueError(
            f"Refusing to enumerate 2^{pool_size} masks (limit {MAX_EXHAUSTIVE_POOL} bits)"
        )
    everything = [tuple(bits) for bits in itertools.product((0, 1), repeat=pool_size)]
    scored = oracle.evaluate_many(everything)
    best = scored[0]
    for candidate in scored[1:]:
        if candidate.fitness > best.fitness:  # type: ignore[operator]
            best = candidate
    return best


def pareto_front(evaluated: Iterable[Chromosome]) -> list[Chromosome]:
    """Masks not dominated on (higher score, fewer features), fewest features first."""
    unique = {c.bits: c for c in evaluated if c.score is not None}
    candidates = list(unique.values())
    front = []
    for c in candidates:
        dominated = any(
            other.score >= c.score  # type: ignore[operator]
            and other.count <= c.count
            and (other.score > c.score or other.count < c.count)  # type: ignore[operator]
            for other in candidates
        )
        if not dominated:
            front.append(c)
    return sorted(front, key=lambda c: (c.count, -c.score, c.bits))  # type: ignore[operator]


def write_mask_file(
    path: Path, tag: str, mask: FeatureMask, fitness: float | None = None
) -> Path:
    """Write a ``features.<tag>.mask`` file: pool size, bitstring and selected names."""
    doc = {
        "tag": tag,
        "pool": len(mask.pool),
        "bits": mask.bitstring,
        "features": list(mask.selected),
    }
    if fitness is not None:
        doc["fitness"] = float(fitness)
    write_yaml(path, doc)
    logger.info(f"Wrote {tag} mask with {mask.count} feature{plural(mask.count)} to {path}")
    return path


def read_mask_file(path: Path) -> tuple[str, FeatureMask]:
    """Read a mask file written by :func:`write_mask_file`.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the pool size or names disagree with this release's pool
    """
    if not path.exists():
        raise FileNotFoundError(f"Mask file not found: {path}")
    doc = read_yaml(path)
    if not isinstance(doc, dict) or not {"tag", "pool", "bits"} <= doc.keys():
        raise ValueError(f"{path}: mask file needs 'tag', 'pool' and 'bits'")
    if doc["pool"] != len(FEATURE_POOL) or len(str(doc["bits"])) != len(FEATURE_POOL):
        raise ValueError(
            f"{path}: mask is over a pool of {doc['pool']} slots, expected {len(FEATURE_POOL)}"
        )
    mask = FeatureMask.from_bitstring(str(doc["bits"]))
    listed = doc.get("features")
    if listed is not None and list(listed) != list(mask.selected):
        raise ValueError(f"{path}: listed features do not match the bitstring")
    return str(doc["tag"]), mask


def write_trace_csv(path: Path, report: FitnessReport) -> Path:
    rows = zip(
        range(len(report.best_per_generation)),
        report.best_per_generation,
        report.mean_per_generation,
        strict=True,
    )
    return write_csv(path, ("generation", "best", "mean"), rows)


def write_pareto_csv(
    path: Path, front: Sequence[Chromosome], names: Sequence[str] = FEATURE_POOL
) -> Path:
    rows = (
        (
            c.count,
            c.score,
            c.fitness,
            c.bitstring,
            " ".join(n for n, b in zip(names, c.bits, strict=True) if b),
        )
        for c in front
    )
    return write_csv(path, ("count", "score", "fitness", "bits", "features"), rows)
