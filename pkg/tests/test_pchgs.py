import itertools

import numpy as np
import pytest

from dynroute.instance import generate_instance
from dynroute.pchgs import (
    HgsParams,
    PcInstance,
    PcInstanceError,
    brute_force_solve,
    local_search,
    mutate_random_remove_insert,
    optimize_request_set,
    preprocess,
    solve,
    srex_crossover,
)
from dynroute.pchgs.evaluate import EvalContext
from dynroute.pchgs.solver import PcHgs, Population

from helpers import pc_from_static, random_pc, square_instance


def small_params(seed=0, iters=200):
    return HgsParams(budget_iters=iters, stall_iters=100, seed=seed)


# ------------------------------------------------------------- preprocess


def test_preprocess_unprofitable_rule_direct_inequality():
    inst = square_instance()
    pc = pc_from_static(inst, prizes=[0.0, 0.0, 0.0, 0.0])
    add_in, add_out = preprocess(pc)
    t = pc.travel
    max_c = int(t.max())
    for r in range(4):
        m = r + 1
        cheapest_in = min(int(t[j][m]) for j in range(5) if j != m)
        cheapest_out = min(int(t[m][j]) for j in range(5) if j != m)
        expected = cheapest_in + cheapest_out - 0.0 >= max_c
        assert (r in add_out) == expected


def test_preprocess_profitable_rule():
    inst = square_instance()
    t = inst.travel
    round_trip = int(t[0, 1]) + int(t[1, 0])
    pc = pc_from_static(inst, prizes=[round_trip + 1, 0.0, 0.0, 0.0])
    add_in, _ = preprocess(pc)
    assert 0 in add_in


def test_preprocess_forcing_prizes_force_all_targets():
    inst = square_instance()
    n = 4
    max_c = int(inst.travel.max())
    m = n * max_c
    pc = pc_from_static(inst, prizes=[m, m, -m, m])
    add_in, add_out = preprocess(pc)
    assert {0, 1, 3} <= add_in
    assert 2 in add_out


def test_preprocess_skips_declared_forced_sets():
    inst = square_instance()
    pc = pc_from_static(inst, prizes=[0.0] * 4, forced_in=frozenset(range(4)))
    add_in, add_out = preprocess(pc)
    assert not add_out


def test_preprocess_dual_qualification_impossible_on_valid_matrices():
    # the cheapest in/out arcs are bounded by the depot round trip, so no
    # request can satisfy both forced-set rules on a non-negative matrix
    for seed in range(6):
        pc = random_pc(6, seed=400 + seed)
        add_in, add_out = preprocess(pc)
        assert not (add_in & add_out)


# ------------------------------------------------------------ brute force


def test_brute_force_empty_instance():
    pc = PcInstance(
        travel=np.zeros((1, 1), dtype=np.int64),
        demand=(),
        service=(),
        tw_open=(),
        tw_close=(),
        prizes=(),
        capacity=5,
        departure=0,
        horizon=10,
    )
    sol = brute_force_solve(pc)
    assert sol.objective == 0.0
    assert sol.routes == ()


def two_request_enumeration(pc):
    """Independent oracle over requests {0, 1}: every served subset, every
    route split, every ordering."""
    ctx = EvalContext(pc)
    plans = [[], [[0]], [[1]], [[0], [1]], [[0, 1]], [[1, 0]]]
    best = -np.inf
    for routes in plans:
        feasible = True
        for r in routes:
            _, capex, warp = ctx.eval_route(r)
            if capex or warp:
                feasible = False
                break
        if not feasible:
            continue
        value = sum(pc.prizes[v] for r in routes for v in r) - sum(
            ctx.route_cost(r) for r in routes
        )
        best = max(best, value)
    return best


def test_brute_force_pairs_when_cheaper():
    inst = square_instance()
    # requests 1 and 2 are adjacent; big prizes force serving both
    pc = pc_from_static(inst, prizes=[500.0, 500.0, -10_000.0, -10_000.0])
    sol = brute_force_solve(pc)
    assert sol.served == {0, 1}
    assert len(sol.routes) == 1
    assert abs(sol.objective - two_request_enumeration(pc)) <= 1e-9


def test_brute_force_matches_exhaustive_enumeration():
    # full independent enumeration over all subsets, orderings, route splits
    for seed in (11, 12, 13):
        pc = random_pc(4, seed=seed)
        ctx = EvalContext(pc)
        best = 0.0  # serving nothing is always feasible
        for k in range(1, 5):
            for subset in itertools.combinations(range(4), k):
                for perm in itertools.permutations(subset):
                    for n_routes in range(1, k + 1):
                        for cuts in itertools.combinations(range(1, k), n_routes - 1):
                            bounds = (0,) + cuts + (k,)
                            routes = [
                                list(perm[bounds[i] : bounds[i + 1]])
                                for i in range(n_routes)
                            ]
                            ok = True
                            for r in routes:
                                _, capex, warp = ctx.eval_route(r)
                                if capex or warp:
                                    ok = False
                                    break
                            if not ok:
                                continue
                            val = sum(pc.prizes[v] for v in subset) - sum(
                                ctx.route_cost(r) for r in routes
                            )
                            best = max(best, val)
        sol = brute_force_solve(pc)
        assert abs(sol.objective - best) <= 1e-9


def test_brute_force_forcing_prizes_serve_target_exactly():
    pc0 = random_pc(5, seed=21)
    max_c = int(pc0.travel.max())
    m = 5 * max_c
    target = {0, 2, 4}
    prizes = tuple(float(m if r in target else -m) for r in range(5))
    import dataclasses

    pc = dataclasses.replace(pc0, prizes=prizes)
    sol = brute_force_solve(pc)
    assert sol.served == target


def test_brute_force_rejects_large_instances():
    pc = random_pc(9, seed=3)
    with pytest.raises(ValueError, match="too large"):
        brute_force_solve(pc)


# ------------------------------------------------------------------ solve


def test_solve_all_negative_prizes_returns_empty():
    inst = square_instance()
    max_c = int(inst.travel.max())
    pc = pc_from_static(inst, prizes=[-4 * max_c] * 4)
    sol = solve(pc, small_params())
    assert sol.objective == 0.0
    assert sol.routes == ()
    assert sol.served == frozenset()


def test_solve_single_profitable_request():
    inst = square_instance()
    t = inst.travel
    round_trip = int(t[0, 1]) + int(t[1, 0])
    pc = pc_from_static(inst, prizes=[round_trip + 50, -9999.0, -9999.0, -9999.0])
    sol = solve(pc, small_params())
    assert sol.routes == ((0,),)
    assert abs(sol.objective - 50.0) <= 1e-9


def test_solve_matches_brute_force_on_small_instances():
    matched = 0
    for seed in range(12):
        pc = random_pc(5 + seed % 3, seed=300 + seed)
        exact = brute_force_solve(pc)
        heur = solve(pc, small_params(seed=seed))
        matched += abs(exact.objective - heur.objective) <= 1e-9
    assert matched >= 11


def test_solve_objective_audit_and_forced_sets():
    for seed in (5, 6):
        pc = random_pc(6, seed=seed)
        import dataclasses

        pc = dataclasses.replace(pc, forced_in=frozenset({0}), forced_out=frozenset({1}))
        sol = solve(pc, small_params(seed=seed))
        assert 0 in sol.served
        assert 1 not in sol.served
        ctx = EvalContext(pc)
        recomputed = sum(pc.prizes[v] for v in sorted(sol.served)) - sum(
            ctx.route_cost(list(r)) for r in sol.routes
        )
        assert abs(sol.objective - recomputed) <= 1e-9
        for route in sol.routes:
            cost, capex, warp = ctx.eval_route(list(route))
            assert capex == 0 and warp == 0


def test_solve_incumbent_trace_is_monotone():
    pc = random_pc(8, seed=44)
    engine = PcHgs(pc, small_params(seed=2))
    engine.run()
    trace = engine.trace
    assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))


def test_solve_deterministic_with_iteration_budget():
    pc = random_pc(7, seed=50)
    a = solve(pc, small_params(seed=9))
    b = solve(pc, small_params(seed=9))
    assert a.objective == b.objective
    assert a.routes == b.routes


def test_solve_warm_start_respects_forced_sets():
    import dataclasses

    pc = random_pc(6, seed=60)
    seed_sol = solve(pc, small_params(seed=1))
    pc2 = dataclasses.replace(pc, forced_out=frozenset({2}))
    sol = solve(pc2, small_params(seed=2), warm_start=[seed_sol])
    assert 2 not in sol.served


def test_release_times_delay_departure():
    inst = square_instance()
    pc = pc_from_static(
        inst,
        prizes=[0.0] * 4,
        forced_in=frozenset(range(4)),
        release=(0, 0, 0, 400),
    )
    sol = solve(pc, small_params())
    ctx = EvalContext(pc)
    for route in sol.routes:
        dep = ctx.route_departure(list(route))
        if 3 in route:
            assert dep == 400
        else:
            assert dep == 0


# ----------------------------------------------------------- local search


def test_local_search_reaches_fixed_point():
    pc = random_pc(8, seed=70)
    engine = PcHgs(pc, small_params(seed=3))
    ind = engine.make_individual(engine.split([r for r in range(8) if r in engine.allowed]))
    once = local_search(ind, pc, small_params(seed=3))
    twice = local_search(once, pc, small_params(seed=3))
    p1 = once.penalized_objective(engine.cap_pen, engine.tw_pen)
    p2 = twice.penalized_objective(engine.cap_pen, engine.tw_pen)
    assert abs(p1 - p2) <= 1e-9


def test_local_search_never_worsens():
    for seed in (71, 72, 73):
        pc = random_pc(5, seed=seed)
        engine = PcHgs(pc, small_params(seed=1))
        ind = engine.make_individual(engine.split(list(engine.allowed)))
        before = ind.penalized_objective(engine.cap_pen, engine.tw_pen)
        out = local_search(ind, pc, small_params(seed=1))
        after = out.penalized_objective(engine.cap_pen, engine.tw_pen)
        assert after >= before - 1e-9


# ----------------------------------------------------------------- SREX


def test_srex_identical_parents_preserve_served_set():
    pc = random_pc(7, seed=80)
    engine = PcHgs(pc, small_params(seed=4))
    a = engine.make_individual(engine.split(list(engine.allowed)))
    child = srex_crossover(a, a, pc, small_params(seed=4))
    assert child.served == a.served


def test_srex_preserves_first_parent_requests():
    pc = pc_from_static(square_instance(), prizes=[0.0] * 4)
    engine = PcHgs(pc, small_params(seed=5))
    assert {0, 1, 2} <= set(engine.allowed)
    a = engine.make_individual([[0, 1], [2]])
    b = engine.make_individual([[1]])
    child = engine.srex_crossover(a, b)
    assert {0, 1, 2} <= set(child.served)


def test_srex_never_serves_forced_out():
    import dataclasses

    pc = dataclasses.replace(random_pc(7, seed=82), forced_out=frozenset({3}))
    engine = PcHgs(pc, small_params(seed=6))
    pool = [engine._random_individual() for _ in range(8)]
    for k in range(300):
        a = pool[k % len(pool)]
        b = pool[(k * 7 + 1) % len(pool)]
        child = engine.srex_crossover(a, b)
        assert 3 not in child.served


# -------------------------------------------------------------- mutation


def test_mutation_identity_when_factors_zero():
    pc = random_pc(8, seed=90)
    params = HgsParams(budget_iters=10, seed=7, p_mut=1.0, alpha_rm=0.0, alpha_ins=0.0)
    engine = PcHgs(pc, params)
    ind = engine.make_individual(engine.split(list(engine.allowed)[:5]))
    before = set(ind.served)
    for _ in range(50):
        engine.mutate_random_remove_insert(ind)
        assert set(ind.served) == before


def test_mutation_identity_when_all_forced_in():
    import dataclasses

    pc0 = random_pc(6, seed=91)
    pc = dataclasses.replace(pc0, forced_in=frozenset(range(6)))
    params = HgsParams(budget_iters=10, seed=8, p_mut=1.0, alpha_rm=0.5, alpha_ins=0.0)
    engine = PcHgs(pc, params)
    ind = engine.make_individual(engine.split(list(range(6))))
    for _ in range(50):
        engine.mutate_random_remove_insert(ind)
        assert set(ind.served) == set(range(6))


def test_mutation_branch_frequencies_are_fair():
    import dataclasses

    pc = dataclasses.replace(random_pc(12, seed=92), prizes=(0.0,) * 12)
    params = HgsParams(budget_iters=10, seed=9, p_mut=1.0, alpha_rm=0.5, alpha_ins=0.5)
    engine = PcHgs(pc, params)
    assert len(engine.allowed) >= 10 and not engine.forced_in
    base_routes = engine.split(list(engine.allowed)[:6])
    n, heads = 4000, 0
    for _ in range(n):
        ind = engine.make_individual(base_routes)
        before = len(ind.served)
        engine.mutate_random_remove_insert(ind)
        after = len(ind.served)
        assert after != before
        heads += after < before
    sigma = (n * 0.25) ** 0.5
    assert abs(heads - n / 2) <= 3 * sigma


# --------------------------------------------------- optimize request set


def test_optimize_request_set_serves_all_when_prizes_huge():
    pc = random_pc(7, seed=95, prize_span=(100000, 100001))
    engine = PcHgs(pc, small_params(seed=10))
    ind = engine.make_individual([])
    engine.optimize_request_set(ind, perturb=False)
    assert set(ind.served) == set(engine.allowed)


def test_optimize_request_set_empties_when_prizes_hopeless():
    import dataclasses

    # -1 prizes: every removal saving (>= 0) beats the prize, but the
    # unprofitability preprocessing rule does not fire for nearby requests
    pc = dataclasses.replace(random_pc(7, seed=96), prizes=(-1.0,) * 7)
    engine = PcHgs(pc, small_params(seed=11))
    assert not engine.forced_in
    ind = engine.make_individual(engine.split(list(engine.allowed)))
    assert len(ind.served) > 0
    engine.optimize_request_set(ind, perturb=False)
    assert ind.served == frozenset()


def test_optimize_request_set_unperturbed_never_decreases_objective():
    for seed in (97, 98, 99):
        pc = random_pc(6, seed=seed)
        engine = PcHgs(pc, small_params(seed=12))
        ind = engine.make_individual(engine.split(list(engine.allowed)[:4]))
        before = ind.penalized_objective(engine.cap_pen, engine.tw_pen)
        engine.optimize_request_set(ind, perturb=False)
        after = ind.penalized_objective(engine.cap_pen, engine.tw_pen)
        assert after >= before - 1e-9


# ------------------------------------------------------------- population


def test_population_never_exceeds_capacity_and_keeps_best():
    pc = random_pc(8, seed=100)
    params = HgsParams(budget_iters=10, seed=13, mu=4, lam=6, elite=2, n_closest=2)
    engine = PcHgs(pc, params)
    pop = Population(params)
    best_obj = -np.inf
    for k in range(40):
        ind = engine._random_individual()
        if ind.feasible:
            best_obj = max(best_obj, ind.prize_sum - ind.cost)
        pop.update(ind, engine.cap_pen, engine.tw_pen)
        assert len(pop.feasible) <= params.mu + params.lam
        assert len(pop.infeasible) <= params.mu + params.lam
        if pop.feasible:
            current_best = max(i.prize_sum - i.cost for i in pop.feasible)
            assert current_best >= best_obj - 1e-9


def test_population_removes_clone_first():
    pc = pc_from_static(square_instance(), prizes=[200.0, 200.0, 200.0, 0.0])
    params = HgsParams(budget_iters=10, seed=14, mu=2, lam=3, elite=1, n_closest=2)
    engine = PcHgs(pc, params)
    pop = Population(params)
    plans = [[[0]], [[1]], [[2]], [[0, 1]], [[1, 2]]]
    members = [engine.make_individual(p) for p in plans]
    assert all(m.feasible for m in members)
    for m in members:
        pop.update(m, engine.cap_pen, engine.tw_pen)
    assert len(pop.feasible) == params.mu + params.lam
    clone = engine.make_individual(plans[2])
    pop.update(clone, engine.cap_pen, engine.tw_pen)  # overflow -> survivor selection
    assert len(pop.feasible) == params.mu
    pairs = [
        (a, b)
        for i, a in enumerate(pop.feasible)
        for b in pop.feasible[i + 1 :]
        if pop.distance(a, b) == 0
    ]
    assert not pairs
