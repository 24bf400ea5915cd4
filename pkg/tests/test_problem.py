import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import objective_loop, sign_enumeration
from orthocut.errors import CapacityError, FeasibilityError, InputError, ShapeError
from orthocut.linalg import gaussian_matrix, haar_unitary, polar
from orthocut.problem import (
    BlockPsdMatrix,
    GroupTuple,
    StiefelTuple,
    brute_force_opt,
    build_procrustes,
    build_random_psd,
    dump_json,
    load_tuple,
    objective,
    procrustes_residual,
    stacked_objective,
)
from orthocut.solver import SolveConfig, local_ascent_group


def random_group(d, n, field, seed):
    return GroupTuple(np.stack([haar_unitary(d, field, seed * 1000 + i) for i in range(n)]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.sampled_from(["real", "complex"]), st.integers(0, 10_000))
def test_objective_matches_block_loop(d, n, field, seed):
    c = build_random_psd(d, n, field, seed=seed)
    t = random_group(d, n, field, seed)
    ref = objective_loop(c.data, d, t.blocks)
    assert objective(c, t) == pytest.approx(ref, rel=1e-10, abs=1e-10)
    dense = BlockPsdMatrix(c.data, d)
    assert objective(dense, t) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_factored_and_dense_paths_agree():
    c = build_random_psd(2, 10, "complex", rank=3, seed=1)
    y = polar(gaussian_matrix(2, 20, 1.0, "complex", 2, batch=10)).reshape(20, 20)
    dense = BlockPsdMatrix(c.data, 2)
    assert stacked_objective(c, y) == pytest.approx(stacked_objective(dense, y), rel=1e-12)


def test_validation():
    with pytest.raises(InputError):
        BlockPsdMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)
    with pytest.raises(InputError):
        BlockPsdMatrix(np.diag([1.0, -1.0]), 1)
    with pytest.raises(ShapeError):
        BlockPsdMatrix(np.eye(3), 2)
    with pytest.raises(InputError):
        BlockPsdMatrix(np.array([[np.inf]]), 1)


def test_infeasible_tuple_rejected():
    with pytest.raises(FeasibilityError):
        GroupTuple(np.array([[[1.0, 0.1], [0.0, 1.0]]]))
    with pytest.raises(ShapeError):
        StiefelTuple(np.ones((1, 3, 2)))


def test_complex_tuple_on_real_instance():
    c = build_random_psd(1, 3, "real", seed=0)
    t = GroupTuple(np.exp(1j * np.arange(3.0)).reshape(3, 1, 1))
    with pytest.raises(ShapeError):
        objective(c, t)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_json_round_trip(field):
    c = build_random_psd(2, 4, field, seed=3)
    back = BlockPsdMatrix.from_json(json.loads(dump_json(c.to_json())))
    assert np.array_equal(back.data, c.data) and back.d == 2
    t = random_group(2, 4, field, 1)
    s = StiefelTuple(t.padded(8))
    for tup in (t, s):
        buf = io.StringIO()
        dump_json(tup.to_json(), buf)
        again = load_tuple(json.loads(buf.getvalue()))
        assert type(again) is type(tup)
        assert np.array_equal(again.blocks, tup.blocks)


def test_padded_preserves_objective():
    c = build_random_psd(2, 5, "real", seed=2)
    t = random_group(2, 5, "real", 4)
    s = StiefelTuple(t.padded(10))
    assert objective(c, s) == pytest.approx(objective(c, t), rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_brute_force_d1_matches_enumeration(seed):
    c = build_random_psd(1, 9, "real", seed=seed)
    res = brute_force_opt(c)
    ref, _ = sign_enumeration(c.data)
    assert res.exact
    assert res.value == pytest.approx(ref, rel=1e-12)
    assert objective(c, res.solution) == pytest.approx(ref, rel=1e-12)


def test_brute_force_complex_grid_monotone():
    c = build_random_psd(1, 5, "complex", seed=1)
    vals = [brute_force_opt(c, grid=g).value for g in (4, 8, 16)]
    assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12


def test_brute_force_d2_dominates_local_ascent():
    c = build_random_psd(2, 3, "real", seed=5)
    bf = brute_force_opt(c, grid=32)
    for s in range(10):
        start = random_group(2, 3, "real", s + 50)
        _, res = local_ascent_group(c, start, SolveConfig())
        assert res.trajectory[-1] <= bf.value + 1e-9


def test_brute_force_capacity():
    with pytest.raises(CapacityError):
        brute_force_opt(build_random_psd(2, 6, "real", seed=0))
    with pytest.raises(CapacityError):
        brute_force_opt(build_random_psd(1, 30, "real", seed=0))


def test_procrustes_instance():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((3, 12))
    qs = [haar_unitary(3, "real", k) for k in range(4)]
    clouds = [q @ base for q in qs]
    c = build_procrustes(clouds)
    t = GroupTuple(np.stack(qs))
    assert procrustes_residual(clouds, t) < 1e-20
    # objective = ||sum_i O_i^T A_i||^2 = n^2 ||base||^2 at the true rotations
    assert objective(c, t) == pytest.approx(16 * np.sum(base ** 2))
    with pytest.raises(ShapeError):
        build_procrustes([base, base[:, :5]])
