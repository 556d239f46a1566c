# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for the random forest, the genetic feature search and mask files."""

import csv
from pathlib import Path

import numpy as np
import pytest
from conftest import tiny_table, toy_sentences

from morphkit.corpus import build_domains
from morphkit.lingfeat import FEATURE_POOL, FeatureMask
from morphkit.output import write_yaml
from morphkit.select import (
    Chromosome,
    FeatureDataset,
    FitnessOracle,
    GAConfig,
    RFConfig,
    build_feature_dataset,
    cross_validated_score,
    exhaustive_search,
    fitness,
    ga_run,
    gini,
    pareto_front,
    read_mask_file,
    rf_fit,
    write_mask_file,
    write_pareto_csv,
    write_trace_csv,
)


def separable_dataset(n: int = 30, seed: int = 0) -> FeatureDataset:
    """Column ``signal`` equals the label; column ``noise`` is random."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = np.column_stack([y.astype(float), rng.normal(size=n)])
    return FeatureDataset(X=X, y=y, names=("signal", "noise"), n_classes=2, tag="pos")


def onemax(target: tuple[int, ...]) -> FitnessOracle:
    return FitnessOracle.from_function(
        lambda bits: float(sum(b == t for b, t in zip(bits, target, strict=True)))
    )


@pytest.mark.parametrize(
    ("labels", "expected"),
    [([0, 0, 0], 0.0), ([0, 1], 0.5), ([0, 1, 2, 3], 0.75), ([1, 1, 2, 2], 0.5)],
)
def test_gini(labels: list[int], expected: float) -> None:
    assert gini(labels) == pytest.approx(expected)


def test_gini_of_nothing() -> None:
    with pytest.raises(ValueError, match="empty"):
        gini([])


def test_forest_learns_a_separable_column() -> None:
    dataset = separable_dataset()
    forest = rf_fit(dataset.X, dataset.y, RFConfig(trees=5), np.random.default_rng(0))

    assert len(forest.trees) == 5
    np.testing.assert_array_equal(forest.predict(dataset.X), dataset.y)
    probs = forest.predict_proba(dataset.X)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_forest_respects_max_depth() -> None:
    dataset = separable_dataset()
    forest = rf_fit(
        dataset.X, dataset.y, RFConfig(trees=3, max_depth=0), np.random.default_rng(0)
    )
    assert all(tree.node_count == 1 for tree in forest.trees)


def test_forest_needs_rows() -> None:
    with pytest.raises(ValueError, match="at least 2 rows"):
        rf_fit(np.zeros((1, 2)), np.zeros(1), RFConfig(), np.random.default_rng(0))


def test_cross_validated_score_prefers_the_signal() -> None:
    dataset = separable_dataset()
    cfg = RFConfig(trees=5)

    assert cross_validated_score((1, 0), dataset, cfg) == pytest.approx(1.0)
    assert cross_validated_score((0, 0), dataset, cfg) < 1.0
    assert cross_validated_score((1, 0), dataset, cfg, metric="accuracy") == pytest.approx(1.0)


def test_fitness_penalizes_mask_size() -> None:
    dataset = separable_dataset()
    value = fitness((1, 0), dataset, RFConfig(trees=5), alpha=0.1)
    assert value == pytest.approx(1.0 - 0.1 * 0.5)
    with pytest.raises(ValueError, match="3 bits for a pool of 2"):
        fitness((1, 0, 0), dataset, RFConfig())


def test_oracle_memoizes_evaluations() -> None:
    calls: list[tuple[int, ...]] = []

    def count(bits: tuple[int, ...]) -> float:
        calls.append(bits)
        return float(sum(bits))

    oracle = FitnessOracle.from_function(count, jobs=2)
    scored = oracle.evaluate_many([(1, 0), (1, 0), (1, 1)])

    assert [c.fitness for c in scored] == [1.0, 1.0, 2.0]
    assert sorted(calls) == [(1, 0), (1, 1)]
    assert (oracle.misses, oracle.hits) == (2, 1)
    assert oracle((1, 1)).fitness == 2.0
    assert oracle.hits == 2


def test_exhaustive_search_on_real_features() -> None:
    dataset = separable_dataset()
    oracle = FitnessOracle.for_dataset(dataset, RFConfig(trees=5), GAConfig(alpha=0.05))

    best = exhaustive_search(oracle, 2)

    assert best.bits == (1, 0)
    assert best.score == pytest.approx(1.0)
    assert best.fitness == pytest.approx(0.975)


def test_exhaustive_search_refuses_large_pools() -> None:
    with pytest.raises(ValueError, match="Refusing to enumerate"):
        exhaustive_search(onemax((0,) * 21), 21)


def test_ga_matches_exhaustive_optimum_on_small_pool() -> None:
    target = (1, 0, 1, 1, 0, 1)
    cfg = GAConfig(generations=40, population=30, mutation_prob=0.1, seed=3)

    best, report = ga_run(None, 6, cfg, oracle=onemax(target))
    optimum = exhaustive_search(onemax(target), 6)

    assert optimum.bits == target
    assert best.fitness == optimum.fitness
    assert best.bits == target
    assert len(report.best_per_generation) == cfg.generations + 1


def test_ga_best_fitness_never_decreases() -> None:
    cfg = GAConfig(generations=10, population=8, seed=1)
    _, report = ga_run(None, 10, cfg, oracle=onemax((1,) * 10))
    trace = report.best_per_generation
    assert all(b >= a for a, b in zip(trace, trace[1:], strict=False))
    assert report.evaluations == len(report.evaluated)


def mixed_dataset(seed: int, pool: int = 6, n: int = 36) -> FeatureDataset:
    """One clean signal column, one noisy copy of it and pure noise elsewhere."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    noisy = np.where(rng.random(n) < 0.3, rng.integers(0, 3, size=n), y)
    X = np.column_stack(
        [y.astype(float), noisy.astype(float), rng.normal(size=(n, pool - 2))]
    )
    return FeatureDataset(
        X=X, y=y, names=tuple(f"f{i}" for i in range(pool)), n_classes=3, tag="case"
    )


@pytest.mark.slow
def test_ga_finds_the_exhaustive_optimum_on_seeded_datasets() -> None:
    """Forest fitness on 20 small pools: the search mostly lands on the optimum."""
    rf_cfg = RFConfig(trees=5)
    hits = 0
    for seed in range(20):
        dataset = mixed_dataset(seed)
        ga_cfg = GAConfig(generations=15, population=16, mutation_prob=0.1, seed=seed)
        oracle = FitnessOracle.for_dataset(dataset, rf_cfg, ga_cfg)

        best, report = ga_run(dataset, 6, ga_cfg, oracle=oracle)
        optimum = exhaustive_search(oracle, 6)

        trace = report.best_per_generation
        assert all(b >= a for a, b in zip(trace, trace[1:], strict=False)), seed
        assert best.fitness <= optimum.fitness
        hits += best.fitness == optimum.fitness
    assert hits >= 16


def test_ga_matches_exhaustive_optimum_on_random_landscapes() -> None:
    """Additive fitness with pairwise interactions over 10 bits, 20 seeds."""
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        weights = rng.normal(size=10)
        pairs = rng.normal(scale=0.3, size=(10, 10))

        def landscape(bits, weights=weights, pairs=pairs) -> float:
            v = np.array(bits, dtype=float)
            return float(weights @ v + v @ pairs @ v)

        oracle = FitnessOracle.from_function(landscape)
        cfg = GAConfig(generations=30, population=30, mutation_prob=0.1, seed=seed)

        best, report = ga_run(None, 10, cfg, oracle=oracle)
        optimum = exhaustive_search(oracle, 10)

        trace = report.best_per_generation
        assert all(b >= a for a, b in zip(trace, trace[1:], strict=False)), seed
        hits += best.fitness == pytest.approx(optimum.fitness)
    assert hits >= 16


def test_ga_is_reproducible_for_a_seed() -> None:
    cfg = GAConfig(generations=5, population=6, seed=7)
    first, _ = ga_run(None, 8, cfg, oracle=onemax((0, 1) * 4))
    second, _ = ga_run(None, 8, cfg, oracle=onemax((0, 1) * 4))
    assert first == second


def test_ga_initial_population_must_fit_the_pool() -> None:
    with pytest.raises(ValueError, match="must have 4 bits"):
        ga_run(None, 4, GAConfig(), oracle=onemax((1,) * 4), initial_population=[(1, 0)])
    with pytest.raises(ValueError, match="dataset or a fitness oracle"):
        ga_run(None, 4, GAConfig())


@pytest.mark.parametrize(
    ("kwargs", "message"),
    [
        ({"folds": 1}, "at least 2 folds"),
        ({"mutation_prob": 1.5}, "mutation_prob"),
        ({"elites": 99}, "elites"),
        ({"metric": "recall"}, "Unknown fitness metric"),
    ],
)
def test_ga_config_validation(kwargs: dict, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        GAConfig(**kwargs)


def test_pareto_front_drops_dominated_masks() -> None:
    a = Chromosome((1, 0, 0), 0.7, 0.8)
    b = Chromosome((1, 1, 0), 0.8, 0.9)
    c = Chromosome((0, 1, 1), 0.6, 0.7)
    d = Chromosome((1, 1, 1), 0.8, 0.9)

    assert pareto_front([d, c, b, a]) == [a, b]


def test_feature_dataset_from_sentences() -> None:
    sentences = toy_sentences(4)
    domains = build_domains(sentences)

    dataset = build_feature_dataset(sentences, "case", domains, tiny_table())

    tokens = sum(len(s) for s in sentences)
    assert dataset.X.shape == (tokens, len(FEATURE_POOL))
    assert dataset.n_classes == domains["case"].n_classes
    assert set(dataset.y.tolist()) <= set(range(dataset.n_classes))
    with pytest.raises(ValueError, match="empty corpus"):
        build_feature_dataset([], "case", domains, tiny_table())


def test_mask_file_round_trip(tmp_path: Path) -> None:
    mask = FeatureMask.from_names(["LoT", "suff-1", "place:D"])
    path = write_mask_file(tmp_path / "features.case.mask", "case", mask, fitness=0.91)

    assert read_mask_file(path) == ("case", mask)


def test_mask_file_with_inconsistent_feature_list(tmp_path: Path) -> None:
    path = tmp_path / "features.pos.mask"
    write_yaml(
        path,
        {"tag": "pos", "pool": 64, "bits": "1" + "0" * 63, "features": ["NW"]},
    )
    with pytest.raises(ValueError, match="do not match the bitstring"):
        read_mask_file(path)


def test_mask_file_for_another_pool(tmp_path: Path) -> None:
    path = tmp_path / "features.pos.mask"
    write_yaml(path, {"tag": "pos", "pool": 54, "bits": "0" * 54})
    with pytest.raises(ValueError, match="pool of 54 slots, expected 64"):
        read_mask_file(path)


def test_trace_and_pareto_csv(tmp_path: Path) -> None:
    cfg = GAConfig(generations=2, population=4, seed=0)
    names = ("a", "b", "c")
    _, report = ga_run(None, 3, cfg, oracle=onemax((1, 0, 1)))

    trace = write_trace_csv(tmp_path / "trace.pos.csv", report)
    front = write_pareto_csv(tmp_path / "pareto.pos.csv", pareto_front(report.evaluated), names)

    with open(trace, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [row["generation"] for row in rows] == ["0", "1", "2"]
    with open(front, newline="") as f:
        first = next(csv.DictReader(f))
    assert set(first) == {"count", "score", "fitness", "bits", "features"}
