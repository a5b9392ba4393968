import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from spiderwalk.analysis import (canonical_paths, confinement_bound, confinement_height,
                                 conductance_edges, congestion, congestion_bound,
                                 edge_resistance, effective_resistance, empirical_survival,
                                 environment_hash, exact_gap, generator_gap, inflated_window,
                                 occupation_asymmetry, resistance_series,
                                 transition_probabilities)
from spiderwalk.env import Environment, EnvironmentSpec, random_spec
from spiderwalk.errors import DisconnectedWindowError, TooLargeError
from spiderwalk.spider import build_graph, neighbors, random_local_config_set

from conftest import flat_env


def _instance(seed, max_levels=4):
    gen = np.random.default_rng(seed)
    n_legs = int(gen.integers(1, 4))
    L = random_local_config_set(gen, n_legs, 1 if n_legs == 1 else int(gen.integers(n_legs, 5)))
    env = Environment(random_spec(gen), seed)
    a = int(gen.integers(-10, 10))
    return L, env, build_graph(L, env, (a, a + int(gen.integers(0, max_levels))))


# ---------------------------------------------------------------- canonical paths


def test_rope2_upward_path(rope2):
    g = build_graph(rope2, flat_env(0.6), (0, 2))
    paths = canonical_paths(g)
    p = paths.path(g.index((0, 1)), g.index((2, 4)))
    # r2 -> r1 on level 0, climb through level 1, finish at r1 of level 2
    expect = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4)]
    assert [tuple(g.vertices[v]) for v in p] == expect
    assert paths.length(g.index((0, 1)), g.index((2, 4))) == 5


def test_same_level_path_stays_on_level(fig1):
    g = build_graph(fig1, flat_env(0.6), (3, 4))
    paths = canonical_paths(g)
    for x in range(4):
        for y in range(4):
            assert all(g.vertices[v][0] == 3 for v in paths.path(x, y))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_path_properties(seed):
    L, _, g = _instance(seed)
    paths = canonical_paths(g)
    edges = set(zip(g.src.tolist(), g.dst.tolist()))
    cap = len(L) * (g.b - g.a + 1)
    for (x, y), p in paths.paths.items():
        assert p[0] == x and p[-1] == y
        assert paths.path(y, x) == p[::-1]
        assert len(p) - 1 <= cap
        assert all(e in edges for e in zip(p[:-1], p[1:]))
    assert len(paths.paths) == g.n * g.n


# ---------------------------------------------------------------- congestion and gap


def test_two_vertex_closed_form(single):
    env = Environment.from_values([0.7, 0.35])
    g = build_graph(single, env, (0, 1))
    A, worst = congestion(canonical_paths(g))
    # two-state chain with alpha = omega_0, beta = 1 - omega_1: gap = alpha + beta = 1/A
    assert A == pytest.approx(1 / (0.7 + 0.65), rel=1e-12)
    assert exact_gap(g) == pytest.approx(0.7 + 0.65, rel=1e-12)
    assert worst in {(0, 1), (1, 0)}


def test_shift_invariance_flat(fig1):
    env = flat_env(0.7)
    A1 = congestion(canonical_paths(build_graph(fig1, env, (0, 3))))[0]
    A2 = congestion(canonical_paths(build_graph(fig1, env, (7, 10))))[0]
    assert A1 == pytest.approx(A2, rel=1e-12)
    g1, g2 = build_graph(fig1, env, (0, 3)), build_graph(fig1, env, (7, 10))
    assert exact_gap(g1) == pytest.approx(exact_gap(g2), rel=1e-10)


def test_congestion_matches_definition(rope2):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 4)
    g = build_graph(rope2, env, (-1, 2))
    paths = canonical_paths(g)
    ph = g.pi_hat
    rate = g.edge_map()
    best = 0.0
    for e in rate:
        s = sum((len(p) - 1) * ph[x] * ph[y] for (x, y), p in paths.paths.items()
                if x != y and e in set(zip(p[:-1], p[1:])))
        best = max(best, s / (rate[e] * ph[e[0]]))
    assert congestion(paths)[0] == pytest.approx(best, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_gap_exceeds_inverse_congestion(seed):
    L, env, g = _instance(seed)
    if g.n < 2:
        return
    rep = congestion_bound(canonical_paths(g), env, with_exact=True)
    assert rep.holds, rep.to_dict()
    assert len(rep.env_hash) == 16


def test_inflated_window(fig1):
    assert inflated_window(fig1, (0, 3)) == (0, 3)
    assert inflated_window(fig1, (0, 3), 3) == (0, 9)
    with pytest.raises(ValueError):
        inflated_window(fig1, (0, 3), -1)


@pytest.mark.parametrize("n", [2, 5, 12])
def test_flat_line_cosine_spectrum(single, n):
    g = build_graph(single, flat_env(0.5), (0, n - 1))
    # reflecting walk, rate 1/2 each way: eigenvalues 1 - cos(pi k / n)
    assert exact_gap(g) == pytest.approx(1 - math.cos(math.pi / n), abs=1e-9)


def test_gap_errors(fig1):
    Q = np.array([[-1.0, 1.0, 0, 0], [1.0, -1.0, 0, 0], [0, 0, -1.0, 1.0], [0, 0, 1.0, -1.0]])
    with pytest.raises(DisconnectedWindowError):
        generator_gap(Q, np.ones(4))
    with pytest.raises(DisconnectedWindowError):
        generator_gap(np.zeros((1, 1)), np.ones(1))
    with pytest.raises(TooLargeError):
        exact_gap(build_graph(fig1, flat_env(), (0, 60)))


# ---------------------------------------------------------------- resistance


def test_series_and_parallel():
    assert effective_resistance(3, [(0, 1, 2.0), (1, 2, 4.0)], [0], [2]) == pytest.approx(0.75)
    assert effective_resistance(2, [(0, 1, 2.0), (0, 1, 3.0)], [0], [1]) == pytest.approx(0.2)
    assert effective_resistance(3, [(0, 1, 1.0)], [0], [2]) == math.inf
    with pytest.raises(TooLargeError):
        effective_resistance(21, [], [0], [1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_rayleigh_monotonicity(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(3, 12))
    edges = [(i, i + 1, float(gen.uniform(0.1, 5))) for i in range(n - 1)]
    for _ in range(int(gen.integers(0, 10))):
        u, v = sorted(gen.choice(n, 2, replace=False).tolist())
        edges.append((u, v, float(gen.uniform(0.1, 5))))
    R = effective_resistance(n, edges, [0], [n - 1])
    k = int(gen.integers(len(edges)))
    u, v, c = edges[k]
    stronger = edges[:k] + [(u, v, c * float(gen.uniform(1, 10)))] + edges[k + 1:]
    assert effective_resistance(n, stronger, [0], [n - 1]) <= R * (1 + 1e-12)
    assert effective_resistance(n, edges + [(0, n - 1, 1.0)], [0], [n - 1]) <= R


def test_edge_resistance_symmetric(fig1):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 6)
    for x1 in range(-5, 5):
        for cfg in fig1.configs:
            s = tuple(x1 + c for c in cfg)
            for t, q in neighbors(s, env, fig1):
                back = dict((tuple(u), r) for u, r in neighbors(t, env, fig1))[s]
                assert edge_resistance(env, s, t, q) == pytest.approx(
                    edge_resistance(env, tuple(t), s, back), rel=1e-12)


def test_resistance_series_is_network_resistance(rope2):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 2)
    n = 5
    rs = resistance_series(rope2, env, n)
    # the sub-network is the ladder (x, x+1) - (x, x+2) - (x+1, x+2) - ...
    g = build_graph(rope2, env, (0, n + 1))
    chain = [g.index((x, x + 1)) for x in range(n + 2)]
    chain = sorted(chain + [g.index((x, x + 2)) for x in range(n + 1)])
    keep = {v: i for i, v in enumerate(chain)}
    edges = [(keep[u], keep[v], c) for u, v, c in conductance_edges(g)
             if u in keep and v in keep]
    R = effective_resistance(len(chain), edges, [0], [len(chain) - 1])
    assert rs.partial_sums[-1] == pytest.approx(R, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_partial_sums_below_majorant(fig1, ballistic_spec, seed):
    rs = resistance_series(fig1, Environment(ballistic_spec, seed), 200)
    assert np.all(rs.partial_sums <= rs.majorant * (1 + 1e-12))
    assert np.all(np.diff(rs.partial_sums) >= 0)


def test_resistance_verdicts(rope2, single, ballistic_spec):
    assert resistance_series(rope2, Environment(ballistic_spec, 1), 500).verdict == "converged"
    sym = EnvironmentSpec.uniform([0.55, 0.45], 0.4, require_nestling=False)
    rs = resistance_series(single, Environment(sym, 1), 500)
    assert rs.verdict == "diverging"
    assert rs.to_dict()["verdict"] == "diverging"
    with pytest.raises(ValueError):
        resistance_series(rope2, flat_env(), 0)


# ---------------------------------------------------------------- transition kernel


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.1, 0.5, 1.0, 3.0]))
def test_uniformization_matches_expm(seed, u):
    _, _, g = _instance(seed, max_levels=3)
    Q = g.generator()
    P = transition_probabilities(Q, u)
    assert np.allclose(P, expm(u * Q), atol=1e-12, rtol=0)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_uniformization_identity_at_zero():
    Q = np.array([[-1.0, 1.0], [2.0, -2.0]])
    assert np.array_equal(transition_probabilities(Q, 0.0), np.eye(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_occupation_identity(seed):
    _, _, g = _instance(seed, max_levels=3)
    for u in (0.5, 1.0, 2.0):
        assert occupation_asymmetry(g, u) < 1e-9


# ---------------------------------------------------------------- confinement


def test_confinement_flat(single):
    env = flat_env(0.5)
    assert confinement_height(env, single, 0, 2) == 0.0
    assert confinement_bound(env, single, 0, 2, 0.0) == 1.0
    assert confinement_bound(env, single, 0, 2, 64.0) == pytest.approx(math.exp(-2.0))
    with pytest.raises(ValueError):
        confinement_bound(env, single, 2, 2, 1.0)


def test_confinement_doubling(rope2, sub_spec):
    env = Environment(sub_spec, 3)
    b1 = confinement_bound(env, rope2, -5, 5, 1e3)
    b2 = confinement_bound(env, rope2, -5, 5, 2e3)
    assert -math.log(b2) == pytest.approx(2 * -math.log(b1), rel=1e-12)


def test_confinement_deep_valley_is_slower(single):
    # a trap: drift to the right then to the left of site 5
    deep = Environment.from_values([0.8] * 5 + [0.2] * 5)
    assert confinement_height(deep, single, 0, 9) > 0
    assert confinement_bound(deep, single, 0, 9, 100.0) > confinement_bound(
        flat_env(0.5), single, 0, 9, 100.0)


def test_empirical_survival():
    times = np.array([1.0, 2.0, 3.0, 4.0])
    cens = np.array([False, False, False, True])
    assert empirical_survival(times, cens, [0.5, 2.5, 10]).tolist() == [1.0, 0.5, 0.25]


def test_environment_hash_stable(sub_spec):
    a = environment_hash(Environment(sub_spec, 1), 0, 10)
    assert a == environment_hash(Environment(sub_spec, 1), 0, 10)
    assert a != environment_hash(Environment(sub_spec, 2), 0, 10)
