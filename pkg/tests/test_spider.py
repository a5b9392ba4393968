import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiderwalk.env import Environment, EnvironmentSpec, potential, random_spec
from spiderwalk.errors import (DisconnectedError, InvalidStateError, NoForwardEdgeError,
                               NotAnchoredError)
from spiderwalk.spider import (build_graph, check_state, log_pi, measure_sandwich_constants,
                               neighbors, parse_L, pi, random_local_config_set, theta,
                               validate_L)

from conftest import flat_env

FIG1 = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (0, 2, 4)]


# ---------------------------------------------------------------- validate_L


def test_rope2(rope2):
    assert rope2.diameter == 1
    assert rope2.r1 == (0, 2) and rope2.r2 == (0, 1)
    assert rope2.label((0, 1)) == 1 and rope2.label((0, 2)) == 2


def test_fig1_set_is_valid(fig1):
    assert fig1.diameter == 2
    assert len(fig1) == 4


def test_invalid_sets():
    with pytest.raises(DisconnectedError):
        validate_L([(0, 1), (0, 3)])
    with pytest.raises(NotAnchoredError):
        validate_L([(1, 1), (1, 2)])
    with pytest.raises(NoForwardEdgeError):
        validate_L([(0, 1)])


def test_parse_L_text():
    L = parse_L("N 2\n# rope\n0 2\n0 1\n")
    assert L.configs == ((0, 1), (0, 2))
    assert parse_L(L.to_text()).configs == L.configs
    with pytest.raises(ValueError):
        parse_L("0 1\n0 2\n")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 3), st.integers(0, 3))
def test_diameter_matches_double_loop(seed, n_legs, extra):
    L = random_local_config_set(np.random.default_rng(seed), n_legs, n_legs + extra)
    d = max(max(abs(a - b) for a, b in zip(u, v)) for u in L.configs for v in L.configs)
    assert L.diameter == d
    assert [L.label(c) for c in L.configs] == list(range(1, len(L) + 1))
    assert list(L.configs) == sorted(L.configs)


# ---------------------------------------------------------------- neighbors


def test_rope2_neighbors(rope2):
    env = Environment.from_values([0.8, 0.4, 0.6], origin=0)
    got = {tuple(s): r for s, r in neighbors((0, 1), env, rope2)}
    assert set(got) == {(0, 2), (-1, 1)}
    assert got[(0, 2)] == env.omega(1)
    assert got[(-1, 1)] == 1 - env.omega(0)
    got = {tuple(s): r for s, r in neighbors((0, 2), env, rope2)}
    assert got == {(1, 2): env.omega(0), (0, 1): 1 - env.omega(2)}


def test_single_leg_is_rwre(single):
    env = Environment.from_values([0.3], origin=4)
    got = {tuple(s): r for s, r in neighbors((4,), env, single)}
    assert got == {(5,): 0.3, (3,): 0.7}


def test_invalid_state(rope2):
    with pytest.raises(InvalidStateError):
        check_state((0, 3), rope2)
    with pytest.raises(InvalidStateError):
        neighbors((0, 0), flat_env(), rope2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(-20, 20))
def test_shift_equivariance(seed, x1):
    gen = np.random.default_rng(seed)
    L = random_local_config_set(gen, 3, 4)
    vals = gen.uniform(0.1, 0.9, 60)
    env = Environment.from_values(vals, origin=-30)
    shifted = Environment.from_values(vals, origin=-29)
    cfg = L.configs[int(gen.integers(len(L)))]
    state = tuple(x1 + c for c in cfg)
    base = neighbors(state, env, L)
    moved = neighbors(tuple(p + 1 for p in state), shifted, L)
    assert [(tuple(p + 1 for p in s), r) for s, r in base] == [(tuple(s), r) for s, r in moved]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_rate_bounds_and_degree(seed):
    gen = np.random.default_rng(seed)
    spec = random_spec(gen)
    L = random_local_config_set(gen, 3, 4)
    env = Environment(spec, seed)
    for cfg in L.configs:
        for x1 in range(-5, 6):
            nb = neighbors(tuple(x1 + c for c in cfg), env, L)
            assert 1 <= len(nb) <= 2 * L.n_legs
            assert sum(r for _, r in nb) <= L.n_legs
            for _, r in nb:
                assert spec.delta - 1e-15 <= r <= 1 - spec.delta + 1e-15


# ---------------------------------------------------------------- measures


def test_theta_flat():
    env = flat_env(0.5)
    assert theta(env, 3) == pytest.approx(2.0)
    assert pi(env, (0, 1, 3)) == pytest.approx(8.0)


def test_theta_example():
    # w_0 = 0.8: V(1) = ln(1/4), theta_0 = e^{-V(0)} + e^{-V(1)} = 1 + 4
    env = Environment.from_values([0.8])
    assert theta(env, 0) == pytest.approx(5.0, rel=1e-14)


def test_pi_is_product(fig1):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 3)
    s = (2, 4, 5)
    assert log_pi(env, s) == pytest.approx(sum(math.log(theta(env, x)) for x in s))


def test_sandwich_constants_closed_form(single):
    K3, K4 = measure_sandwich_constants(single, 0.25)
    assert K3 == pytest.approx((4 / 3) * (1 / 3))
    assert K4 == pytest.approx(4 * 3)
    K3, K4 = measure_sandwich_constants(single, 0.5)
    assert K3 == pytest.approx(2.0) and K4 == pytest.approx(2.0)


def test_sandwich_on_rope2(rope2, gen):
    spec = EnvironmentSpec.uniform([0.9, 0.45], 0.1)
    K3, K4 = measure_sandwich_constants(rope2, 0.1)
    for seed in range(20):
        env = Environment(spec, seed)
        prof = potential(env, -60, 62)
        for _ in range(50):
            x1 = int(gen.integers(-60, 60))
            cfg = rope2.configs[int(gen.integers(2))]
            lp = log_pi(env, tuple(x1 + c for c in cfg))
            v = 2 * prof(x1)
            assert math.log(K3) - v <= lp + 1e-12
            assert lp <= math.log(K4) - v + 1e-12


# ---------------------------------------------------------------- graphs


def test_vertex_counts(rope2, fig1):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 0)
    assert build_graph(rope2, env, (0, 3)).n == 8
    assert build_graph(fig1, env, (0, 1)).n == 8


def test_fig1_cross_level_edges(fig1):
    env = Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 0)
    g = build_graph(fig1, env, (0, 1))
    cross = {(g.vertices[u], g.vertices[v]) for u, v in zip(g.src, g.dst)
             if g.vertices[u][0] != g.vertices[v][0]}
    # leg-1 moves between levels 0 and 1, enumerated by hand
    expect = {((0, 2, 3), (1, 2, 3)), ((1, 2, 3), (0, 2, 3)),
              ((0, 2, 4), (1, 2, 4)), ((1, 2, 4), (0, 2, 4))}
    assert {(tuple(a), tuple(b)) for a, b in cross} == expect


def test_single_level_window(fig1):
    g = build_graph(fig1, Environment(EnvironmentSpec.uniform([0.8, 0.4], 0.1), 1), (5, 5))
    assert all(g.vertices[u][0] == 5 == g.vertices[v][0] for u, v in zip(g.src, g.dst))


def test_golden_edge_dump(rope2):
    env = Environment.from_values([0.8, 0.4, 0.6, 0.3])
    g = build_graph(rope2, env, (0, 1))
    # rates derived by hand from the neighbor rules
    expect = [
        ("(0,1)", "(0,2)", 0.4),
        ("(0,2)", "(1,2)", 0.8),
        ("(0,2)", "(0,1)", 1 - 0.6),
        ("(1,2)", "(0,2)", 1 - 0.4),
        ("(1,2)", "(1,3)", 0.6),
        ("(1,3)", "(1,2)", 1 - 0.3),
    ]
    text = "".join(f"{a} {b} {r:.17g}\n" for a, b, r in expect)
    assert g.dump_edges() == text


def test_single_leg_graph_is_line(single):
    vals = [0.3, 0.6, 0.55, 0.8, 0.2]
    env = Environment.from_values(vals)
    g = build_graph(single, env, (0, 4))
    edges = g.edge_map()
    expect = {}
    for x in range(5):
        if x < 4:
            expect[(x, x + 1)] = vals[x]
        if x > 0:
            expect[(x, x - 1)] = 1 - vals[x]
    assert edges == expect


def _random_graph(seed):
    gen = np.random.default_rng(seed)
    n_legs = int(gen.integers(1, 4))
    L = random_local_config_set(gen, n_legs, 1 if n_legs == 1 else int(gen.integers(n_legs, 5)))
    env = Environment(random_spec(gen), seed)
    a = int(gen.integers(-20, 20))
    return build_graph(L, env, (a, a + int(gen.integers(0, 8))))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_detailed_balance(seed):
    g = _random_graph(seed)
    pi_ = g.pi
    rate = g.edge_map()
    for (u, v), q in rate.items():
        lhs, rhs = pi_[u] * q, pi_[v] * rate[(v, u)]
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))
    assert g.pi_hat.sum() == pytest.approx(1.0, abs=1e-12)


def test_edges_are_unit_moves():
    for seed in range(30):
        g = _random_graph(seed)
        for u, v in zip(g.src, g.dst):
            d = [abs(a - b) for a, b in zip(g.vertices[u], g.vertices[v])]
            assert sum(d) == 1
        pairs = set(zip(g.src.tolist(), g.dst.tolist()))
        assert all((v, u) in pairs for u, v in pairs)


def test_window_vertices_cover_all_levels(fig1):
    g = build_graph(fig1, flat_env(), (-2, 1))
    expect = {tuple(x + c for c in cfg) for x, cfg in itertools.product(range(-2, 2), fig1.configs)}
    assert {tuple(v) for v in g.vertices} == expect
