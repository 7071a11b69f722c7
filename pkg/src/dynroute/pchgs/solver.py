"""Hybrid genetic search for the prize-collecting VRPTW.

Population-based search with SREX crossover, a local-search improvement stage
(classic time-window move set plus request insert/remove neighborhoods), two
request-set mutation operators, diversity-aware survivor selection, and
penalty adaptation for infeasible intermediates. Forced-in requests are always
served, forced-out requests never are.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

import numpy as np

from .evaluate import EvalContext
from .types import (
    HgsParams,
    Individual,
    PcInfeasibleError,
    PcInstance,
    PcInstanceError,
    PcSolution,
)

_EPS = 1e-9


def preprocess(inst: PcInstance) -> tuple[frozenset[int], frozenset[int]]:
    """Closed-form forced-set additions from the prize structure.

    A request is certainly unprofitable when its cheapest in+out arcs minus
    its prize already exceed the largest arc cost (removing it from any route
    can only help); certainly profitable when its prize beats the direct depot
    round trip. Additions never touch requests already in a declared forced
    set. A request satisfying both rules signals inconsistent prizes.
    """
    n = inst.n_requests
    if n == 0:
        return frozenset(), frozenset()
    t = inst.travel
    max_c = int(t.max())
    add_in: set[int] = set()
    add_out: set[int] = set()
    for r in range(n):
        m = r + 1
        cheapest_in = min(int(t[j][m]) for j in range(n + 1) if j != m)
        cheapest_out = min(int(t[m][j]) for j in range(n + 1) if j != m)
        prize = inst.prizes[r]
        out_rule = cheapest_in + cheapest_out - prize >= max_c
        in_rule = int(t[0][m]) + int(t[m][0]) < prize
        if out_rule and in_rule:
            raise PcInstanceError(
                f"request {r}: qualifies as both certainly profitable and certainly "
                f"unprofitable (prize {prize})"
            )
        if r in inst.forced_in or r in inst.forced_out:
            continue
        if out_rule:
            add_out.add(r)
        elif in_rule:
            add_in.add(r)
    return frozenset(add_in), frozenset(add_out)


class _Work:
    """Mutable routes-plus-stats view of one individual during improvement.

    Routes carry a modification counter so sweeps can skip request pairs whose
    routes have not changed since the pair was last verified unimproving.
    """

    __slots__ = ("ctx", "routes", "stats", "loads", "arc_pref", "load_pref",
                 "pos", "version", "counter")

    def __init__(self, ctx: EvalContext, routes):
        self.ctx = ctx
        self.routes = [list(r) for r in routes if r]
        self.stats = [ctx.eval_route(r) for r in self.routes]
        self.loads = []
        self.arc_pref = []
        self.load_pref = []
        for r in self.routes:
            self._build_prefixes(r)
        self.version = [0] * len(self.routes)
        self.counter = 0
        self._rebuild_pos()

    def _build_prefixes(self, route: list[int]) -> None:
        t = self.ctx.t
        dem = self.ctx.demand
        arcs: list[int] = []
        lds: list[int] = []
        prev = 0
        acc = 0
        load = 0
        for v in route:
            acc += t[prev][v + 1]
            load += dem[v]
            arcs.append(acc)
            lds.append(load)
            prev = v + 1
        self.arc_pref.append(arcs)
        self.load_pref.append(lds)
        self.loads.append(load)

    def _rebuild_pos(self) -> None:
        self.pos = {}
        for ri, route in enumerate(self.routes):
            for pi, v in enumerate(route):
                self.pos[v] = (ri, pi)

    def served(self) -> set[int]:
        return set(self.pos)

    def route_pen(self, ri: int, cap_pen: float, tw_pen: float) -> float:
        c, ce, w = self.stats[ri]
        return c + cap_pen * ce + tw_pen * w

    def commit(self, changes: dict[int, list[int]], new_routes=()) -> None:
        """Replace routes per index (empty list deletes), then append new routes."""
        ctx = self.ctx
        self.counter += 1
        for ri, visits in changes.items():
            self.routes[ri] = visits
            self.stats[ri] = ctx.eval_route(visits) if visits else (0, 0, 0)
            self.version[ri] = self.counter
        for visits in new_routes:
            if visits:
                self.routes.append(list(visits))
                self.stats.append(ctx.eval_route(visits))
                self.version.append(self.counter)
        keep = [i for i, r in enumerate(self.routes) if r]
        if len(keep) != len(self.routes):
            self.routes = [self.routes[i] for i in keep]
            self.stats = [self.stats[i] for i in keep]
            self.version = [self.version[i] for i in keep]
        self.arc_pref = []
        self.load_pref = []
        self.loads = []
        for r in self.routes:
            self._build_prefixes(r)
        self._rebuild_pos()


@dataclass
class _Incumbent:
    objective: float
    routes: tuple[tuple[int, ...], ...]
    served: tuple[int, ...]

    def better_than(self, other: "_Incumbent | None") -> bool:
        if other is None:
            return True
        if self.objective > other.objective + _EPS:
            return True
        if self.objective < other.objective - _EPS:
            return False
        if len(self.routes) != len(other.routes):
            return len(self.routes) < len(other.routes)
        return self.served < other.served


def _signature(ind: Individual) -> tuple[frozenset, frozenset[int]]:
    pairs = frozenset(
        frozenset((ind.giant[i], ind.giant[i + 1])) for i in range(len(ind.giant) - 1)
    )
    return pairs, ind.served


class Population:
    """Feasible/infeasible subpopulations with rank-based biased fitness.

    Fitness blends the objective rank with a diversity rank (mean distance to
    the closest neighbors; distance = broken giant-tour pairs plus served-set
    symmetric difference). Survivor selection removes clones first and never
    evicts the elite by objective.
    """

    def __init__(self, params: HgsParams):
        self.params = params
        self.feasible: list[Individual] = []
        self.infeasible: list[Individual] = []
        self._sig: dict[int, tuple[frozenset, frozenset[int]]] = {}
        self._cache = None

    def members(self) -> list[Individual]:
        return self.feasible + self.infeasible

    def distance(self, a: Individual, b: Individual) -> int:
        pa, sa = self._sig.get(id(a)) or _signature(a)
        pb, sb = self._sig.get(id(b)) or _signature(b)
        return len(pa ^ pb) + len(sa ^ sb)

    def update(self, ind: Individual, cap_pen: float, tw_pen: float) -> None:
        sub = self.feasible if ind.feasible else self.infeasible
        sub.append(ind)
        self._sig[id(ind)] = _signature(ind)
        self._cache = None
        if len(sub) > self.params.mu + self.params.lam:
            self._select_survivors(sub, cap_pen, tw_pen)

    def _fitness(self, sub: list[Individual], cap_pen: float, tw_pen: float) -> list[float]:
        k = len(sub)
        if k == 0:
            return []
        objs = [ind.penalized_objective(cap_pen, tw_pen) for ind in sub]
        obj_rank = [0] * k
        for rank, i in enumerate(sorted(range(k), key=lambda i: -objs[i])):
            obj_rank[i] = rank
        if k == 1:
            return [0.0]
        dists = [[0] * k for _ in range(k)]
        for i in range(k):
            for j in range(i + 1, k):
                d = self.distance(sub[i], sub[j])
                dists[i][j] = d
                dists[j][i] = d
        n_close = min(self.params.n_closest, k - 1)
        div = [
            -sum(sorted(dists[i][j] for j in range(k) if j != i)[:n_close]) / n_close
            for i in range(k)
        ]
        div_rank = [0] * k
        for rank, i in enumerate(sorted(range(k), key=lambda i: div[i])):
            div_rank[i] = rank
        w = 1.0 - self.params.elite / k
        return [obj_rank[i] + w * div_rank[i] for i in range(k)]

    def _select_survivors(self, sub: list[Individual], cap_pen: float, tw_pen: float) -> None:
        dists = {
            (id(a), id(b)): self.distance(a, b)
            for i, a in enumerate(sub)
            for b in sub[i + 1 :]
        }

        def dist(a, b) -> int:
            key = (id(a), id(b))
            return dists[key] if key in dists else dists[(id(b), id(a))]

        n_close = self.params.n_closest
        while len(sub) > self.params.mu:
            k = len(sub)
            objs = [ind.penalized_objective(cap_pen, tw_pen) for ind in sub]
            obj_rank = [0] * k
            for rank, i in enumerate(sorted(range(k), key=lambda i: -objs[i])):
                obj_rank[i] = rank
            div = [
                -sum(sorted(dist(sub[i], sub[j]) for j in range(k) if j != i)[:n_close])
                for i in range(k)
            ]
            div_rank = [0] * k
            for rank, i in enumerate(sorted(range(k), key=lambda i: div[i])):
                div_rank[i] = rank
            w = 1.0 - self.params.elite / k
            fitness = [obj_rank[i] + w * div_rank[i] for i in range(k)]
            protected = set(sorted(range(k), key=lambda i: -objs[i])[: max(1, self.params.elite)])
            is_clone = [
                any(dist(sub[i], sub[j]) == 0 for j in range(k) if j != i) for i in range(k)
            ]
            victims = sorted(
                (i for i in range(k) if i not in protected or is_clone[i]),
                key=lambda i: (not is_clone[i], -fitness[i]),
            )
            removed = sub.pop(victims[0])
            self._sig.pop(id(removed), None)
        self._cache = None

    def tournament(self, rng: np.random.Generator, cap_pen: float, tw_pen: float) -> Individual:
        if self._cache is None:
            pool = self.members()
            fits = self._fitness(self.feasible, cap_pen, tw_pen) + self._fitness(
                self.infeasible, cap_pen, tw_pen
            )
            self._cache = (pool, fits)
        pool, fits = self._cache
        i = int(rng.integers(0, len(pool)))
        j = int(rng.integers(0, len(pool)))
        return pool[i] if fits[i] <= fits[j] else pool[j]


class PcHgs:
    """One search run over one instance. Owns all mutable search state."""

    def __init__(self, inst: PcInstance, params: HgsParams | None = None):
        params = params or HgsParams()
        params.validate()
        self.inst = inst
        self.params = params
        self.ctx = EvalContext(inst)
        self.rng = np.random.default_rng([params.seed, inst.n_requests])
        add_in, add_out = preprocess(inst)
        self.forced_in = frozenset(inst.forced_in | add_in)
        self.forced_out = frozenset(inst.forced_out | add_out)
        self.allowed = [r for r in range(inst.n_requests) if r not in self.forced_out]
        self.prizes = list(inst.prizes)
        self.cap_pen = (
            params.cap_penalty
            if params.cap_penalty is not None
            else max(1.0, inst.max_cost() / max(1, max(inst.demand, default=1)))
        )
        self.tw_pen = max(params.penalty_lo, params.tw_penalty)
        self._neighbors = self._granular_neighbors()
        self.pop = Population(params)
        self.incumbent: _Incumbent | None = None
        self.iterations = 0
        self._ls_cap_feas: list[bool] = []
        self._ls_tw_feas: list[bool] = []
        self.trace: list[float] = []

    # ------------------------------------------------------------------ setup

    def _granular_neighbors(self) -> dict[int, list[int]]:
        ctx = self.ctx
        out: dict[int, list[int]] = {}
        gamma = self.params.granularity
        for u in self.allowed:
            scored = []
            for v in self.allowed:
                if v == u:
                    continue
                tuv = ctx.t[u + 1][v + 1]
                wait = max(0, ctx.open[v] - (ctx.close[u] + ctx.service[u] + tuv))
                late = max(0, (ctx.open[u] + ctx.service[u] + tuv) - ctx.close[v])
                scored.append((tuv + wait + late, v))
            scored.sort()
            out[u] = [v for _, v in scored[:gamma]]
        return out

    # ------------------------------------------------------- individual admin

    def _refresh(self, ind: Individual, work: _Work) -> None:
        ind.routes = [list(r) for r in work.routes]
        ind.giant = [v for r in work.routes for v in r]
        ind.cost = sum(s[0] for s in work.stats)
        ind.cap_excess = sum(s[1] for s in work.stats)
        ind.tw_warp = sum(s[2] for s in work.stats)
        ind.prize_sum = float(sum(self.prizes[v] for v in ind.giant))
        ind.feasible = ind.cap_excess == 0 and ind.tw_warp == 0

    def make_individual(self, routes) -> Individual:
        ind = Individual(giant=[], routes=[])
        self._refresh(ind, _Work(self.ctx, routes))
        return ind

    def _repair(self, routes) -> list[list[int]]:
        seen: set[int] = set()
        cleaned: list[list[int]] = []
        for route in routes:
            keep = [
                v
                for v in route
                if 0 <= v < self.inst.n_requests and v not in self.forced_out and v not in seen
            ]
            seen.update(keep)
            if keep:
                cleaned.append(keep)
        work = _Work(self.ctx, cleaned)
        for r in sorted(self.forced_in - seen):
            self._apply_best_insertion(work, r)
        return [list(r) for r in work.routes]

    # ------------------------------------------------------------------ split

    def split(self, giant: list[int]) -> list[list[int]]:
        """Penalty-aware linear split of a giant tour into routes."""
        ctx = self.ctx
        n = len(giant)
        if n == 0:
            return []
        best = [math.inf] * (n + 1)
        choice = [0] * (n + 1)
        best[0] = 0.0
        t = ctx.t
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        for j in range(n):
            if best[j] == math.inf:
                continue
            dep = ctx.departure
            time = dep
            load = 0
            warp = 0
            cost_to_last = 0
            prev = 0
            for i in range(j + 1, n + 1):
                v = giant[i - 1]
                m = v + 1
                if ctx.release is not None and ctx.release[v] > dep:
                    seg = giant[j:i]
                    dep = ctx.route_departure(seg)
                    time = dep
                    load = 0
                    warp = 0
                    cost_to_last = 0
                    prev = 0
                    for x in seg:
                        mx = x + 1
                        arc = t[prev][mx]
                        cost_to_last += arc
                        time += arc
                        if time < ctx.open[x]:
                            time = ctx.open[x]
                        if time > ctx.close[x]:
                            warp += time - ctx.close[x]
                            time = ctx.close[x]
                        time += ctx.service[x]
                        load += ctx.demand[x]
                        prev = mx
                else:
                    arc = t[prev][m]
                    cost_to_last += arc
                    time += arc
                    if time < ctx.open[v]:
                        time = ctx.open[v]
                    if time > ctx.close[v]:
                        warp += time - ctx.close[v]
                        time = ctx.close[v]
                    time += ctx.service[v]
                    load += ctx.demand[v]
                    prev = m
                route_cost = cost_to_last + t[prev][0]
                route_warp = warp + max(0, time + t[prev][0] - ctx.horizon)
                capex = max(0, load - ctx.capacity)
                pen = route_cost + cap_pen * capex + tw_pen * route_warp
                if best[j] + pen < best[i]:
                    best[i] = best[j] + pen
                    choice[i] = j
        routes: list[list[int]] = []
        i = n
        while i > 0:
            j = choice[i]
            routes.append(giant[j:i])
            i = j
        routes.reverse()
        return routes

    # ------------------------------------------------------------ insertions

    def _best_insertion(self, work: _Work, r: int) -> tuple[float, int, int]:
        """Cheapest penalized insertion of request r: (delta, route_idx, position).

        route_idx == -1 means a fresh single-request route.
        """
        ctx = self.ctx
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        best = (ctx.penalized([r], cap_pen, tw_pen), -1, 0)
        for ri, route in enumerate(work.routes):
            old = work.route_pen(ri, cap_pen, tw_pen)
            for pi in range(len(route) + 1):
                cand = route[:pi] + [r] + route[pi:]
                pen = ctx.penalized_bounded(cand, cap_pen, tw_pen, old + best[0] - _EPS)
                if pen is not None:
                    best = (pen - old, ri, pi)
        return best

    def _apply_best_insertion(self, work: _Work, r: int) -> float:
        delta, ri, pi = self._best_insertion(work, r)
        if ri < 0:
            work.commit({}, [[r]])
        else:
            route = work.routes[ri]
            work.commit({ri: route[:pi] + [r] + route[pi:]})
        return delta

    def _removal_saving(self, work: _Work, r: int) -> float:
        ri, pi = work.pos[r]
        route = work.routes[ri]
        cand = route[:pi] + route[pi + 1 :]
        old = work.route_pen(ri, self.cap_pen, self.tw_pen)
        new = self.ctx.penalized(cand, self.cap_pen, self.tw_pen) if cand else 0.0
        return old - new

    # ---------------------------------------------------------- local search

    def local_search(self, ind: Individual) -> None:
        """Improve ``ind`` in place to a fixed point of the full move set."""
        work = _Work(self.ctx, ind.routes)
        tested: dict[int, int] = {}
        tested_star: dict[int, int] = {}
        while True:
            while self._traditional_sweep(work, tested, tested_star):
                pass
            if not self._request_set_sweep(work):
                break
        self._refresh(ind, work)
        self._ls_cap_feas.append(ind.cap_excess == 0)
        self._ls_tw_feas.append(ind.tw_warp == 0)

    def _improve(self, ind: Individual) -> None:
        """Local search plus a repair pass: infeasible outputs are re-searched
        under 10x penalties half of the time."""
        self.local_search(ind)
        if not ind.feasible and self.rng.random() < 0.5:
            saved = (self.cap_pen, self.tw_pen)
            self.cap_pen, self.tw_pen = saved[0] * 10.0, saved[1] * 10.0
            try:
                self.local_search(ind)
            finally:
                self.cap_pen, self.tw_pen = saved

    def _traditional_sweep(self, work: _Work, tested: dict, tested_star: dict) -> bool:
        improved = False
        order = list(work.pos)
        self.rng.shuffle(order)
        version = work.version
        pos = work.pos
        for u in order:
            if u not in pos:
                continue
            seen = tested.get(u, -1)
            clean = True
            for v in self._neighbors[u]:
                if u not in pos:
                    clean = False
                    break
                pv = pos.get(v)
                if pv is None:
                    continue
                if version[pos[u][0]] <= seen and version[pv[0]] <= seen:
                    continue
                if self._try_pair_moves(work, u, v):
                    improved = True
                    clean = False
                    break
            if clean and u in pos:
                tested[u] = work.counter
        if self._relocate_star(work, tested_star):
            improved = True
        if self._swap_star(work, tested_star):
            improved = True
        return improved

    def _try_candidate(self, work: _Work, changes: dict[int, list[int]], new_routes=()) -> bool:
        """Evaluate one move; commit and report True when it strictly improves."""
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        ctx = self.ctx
        old = 0.0
        for ri in changes:
            old += work.route_pen(ri, cap_pen, tw_pen)
        bound = old - _EPS
        total = 0.0
        for visits in changes.values():
            if not visits:
                continue
            pen = ctx.penalized_bounded(visits, cap_pen, tw_pen, bound - total)
            if pen is None:
                return False
            total += pen
        for visits in new_routes:
            pen = ctx.penalized_bounded(visits, cap_pen, tw_pen, bound - total)
            if pen is None:
                return False
            total += pen
        work.commit(changes, new_routes)
        return True

    def _try_pair_moves(self, work: _Work, u: int, v: int) -> bool:
        if work.pos[u][0] == work.pos[v][0]:
            return self._try_same_route_moves(work, u, v)
        return self._try_cross_route_moves(work, u, v)

    def _try_same_route_moves(self, work: _Work, u: int, v: int) -> bool:
        """Moves with index interference are checked by bounded walks directly."""
        ru, pu = work.pos[u]
        _, pv = work.pos[v]
        route = work.routes[ru]

        def relocate(moved: list[int], before: bool) -> bool:
            if v in moved:
                return False
            src = [x for x in route if x not in moved]
            at = src.index(v) + (0 if before else 1)
            return self._try_candidate(work, {ru: src[:at] + moved + src[at:]})

        succ_u = route[pu + 1] if pu + 1 < len(route) else None
        succ_v = route[pv + 1] if pv + 1 < len(route) else None
        if relocate([u], before=False):
            return True
        if relocate([u], before=True):
            return True
        if succ_u is not None and succ_u != v:
            if relocate([u, succ_u], before=False):
                return True
            if relocate([succ_u, u], before=False):
                return True
        blocks = [([u], [v])]
        if succ_u is not None and succ_u != v:
            blocks.append(([u, succ_u], [v]))
            if succ_v is not None and succ_v not in (u, succ_u):
                blocks.append(([u, succ_u], [v, succ_v]))
        for block_u, block_v in blocks:
            if set(block_u) & set(block_v):
                continue
            iu = route.index(block_u[0])
            iv = route.index(block_v[0])
            if iu < iv and iu + len(block_u) > iv:
                continue
            if iv < iu and iv + len(block_v) > iu:
                continue
            out: list[int] = []
            i = 0
            while i < len(route):
                if i == iu:
                    out.extend(block_v)
                    i += len(block_u)
                elif i == iv:
                    out.extend(block_u)
                    i += len(block_v)
                else:
                    out.append(route[i])
                    i += 1
            if self._try_candidate(work, {ru: out}):
                return True
        lo, hi = (pu, pv) if pu < pv else (pv, pu)
        rev = route[:lo] + route[lo : hi + 1][::-1] + route[hi + 1 :]
        return self._try_candidate(work, {ru: rev})

    def _try_cross_route_moves(self, work: _Work, u: int, v: int) -> bool:
        """Cross-route moves: O(1) cost/load screening, then a bounded walk.

        The screen uses new_cost + cap_penalty * new_capacity_excess as a lower
        bound on the new penalized cost (time warp is non-negative), so no
        improving move is ever screened out.
        """
        ctx = self.ctx
        t = ctx.t
        dem = ctx.demand
        cap = ctx.capacity
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        ru, pu = work.pos[u]
        rv, pv = work.pos[v]
        route_u = work.routes[ru]
        route_v = work.routes[rv]
        cost_u, capex_u, warp_u = work.stats[ru]
        cost_v, capex_v, warp_v = work.stats[rv]
        load_u = work.loads[ru]
        load_v = work.loads[rv]
        old_pen = (
            cost_u + cost_v
            + cap_pen * (capex_u + capex_v)
            + tw_pen * (warp_u + warp_v)
        )
        bound = old_pen - _EPS
        um = u + 1
        vm = v + 1
        a_u = route_u[pu - 1] + 1 if pu > 0 else 0
        b_u = route_u[pu + 1] + 1 if pu + 1 < len(route_u) else 0
        a_v = route_v[pv - 1] + 1 if pv > 0 else 0
        b_v = route_v[pv + 1] + 1 if pv + 1 < len(route_v) else 0
        succ_u = route_u[pu + 1] if pu + 1 < len(route_u) else None
        succ_v = route_v[pv + 1] if pv + 1 < len(route_v) else None

        def screen(new_cost_u, new_cost_v, new_load_u, new_load_v) -> bool:
            lb = new_cost_u + new_cost_v
            if new_load_u > cap:
                lb += cap_pen * (new_load_u - cap)
            if new_load_v > cap:
                lb += cap_pen * (new_load_v - cap)
            return lb < bound

        def walk_commit(new_u: list[int], new_v: list[int]) -> bool:
            total = 0.0
            if new_u:
                pen = ctx.penalized_bounded(new_u, cap_pen, tw_pen, bound)
                if pen is None:
                    return False
                total = pen
            if new_v:
                pen = ctx.penalized_bounded(new_v, cap_pen, tw_pen, bound - total)
                if pen is None:
                    return False
            work.commit({ru: new_u, rv: new_v})
            return True

        # relocate u after / before v
        rm_u = t[a_u][um] + t[um][b_u] - t[a_u][b_u]
        for before in (False, True):
            c, d = (a_v, vm) if before else (vm, b_v)
            ins = t[c][um] + t[um][d] - t[c][d]
            if screen(cost_u - rm_u, cost_v + ins, load_u - dem[u], load_v + dem[u]):
                at = pv + (0 if before else 1)
                if walk_commit(
                    route_u[:pu] + route_u[pu + 1 :],
                    route_v[:at] + [u] + route_v[at:],
                ):
                    return True

        # relocate the pair (u, succ_u) after v, forward and reversed
        if succ_u is not None:
            sm = succ_u + 1
            b2_u = route_u[pu + 2] + 1 if pu + 2 < len(route_u) else 0
            rm_pair = t[a_u][um] + t[um][sm] + t[sm][b2_u] - t[a_u][b2_u]
            pair_load = dem[u] + dem[succ_u]
            src = route_u[:pu] + route_u[pu + 2 :]
            for block in ((u, succ_u), (succ_u, u)):
                x, y = block[0] + 1, block[1] + 1
                ins = t[vm][x] + t[x][y] + t[y][b_v] - t[vm][b_v]
                if screen(cost_u - rm_pair, cost_v + ins, load_u - pair_load, load_v + pair_load):
                    if walk_commit(src, route_v[: pv + 1] + list(block) + route_v[pv + 1 :]):
                        return True

        # swap u <-> v
        du = t[a_u][vm] + t[vm][b_u] - (t[a_u][um] + t[um][b_u])
        dv = t[a_v][um] + t[um][b_v] - (t[a_v][vm] + t[vm][b_v])
        if screen(
            cost_u + du, cost_v + dv,
            load_u - dem[u] + dem[v], load_v - dem[v] + dem[u],
        ):
            if walk_commit(
                route_u[:pu] + [v] + route_u[pu + 1 :],
                route_v[:pv] + [u] + route_v[pv + 1 :],
            ):
                return True

        # swap pair (u, succ_u) <-> v and <-> pair (v, succ_v)
        if succ_u is not None and succ_u != v:
            sm = succ_u + 1
            b2_u = route_u[pu + 2] + 1 if pu + 2 < len(route_u) else 0
            pair_load_u = dem[u] + dem[succ_u]
            du_pair = t[a_u][vm] + t[vm][b2_u] - (t[a_u][um] + t[um][sm] + t[sm][b2_u])
            dv_single = (
                t[a_v][um] + t[um][sm] + t[sm][b_v] - (t[a_v][vm] + t[vm][b_v])
            )
            if screen(
                cost_u + du_pair, cost_v + dv_single,
                load_u - pair_load_u + dem[v], load_v - dem[v] + pair_load_u,
            ):
                if walk_commit(
                    route_u[:pu] + [v] + route_u[pu + 2 :],
                    route_v[:pv] + [u, succ_u] + route_v[pv + 1 :],
                ):
                    return True
            if succ_v is not None and succ_v not in (u, succ_u):
                svm = succ_v + 1
                b2_v = route_v[pv + 2] + 1 if pv + 2 < len(route_v) else 0
                pair_load_v = dem[v] + dem[succ_v]
                du2 = t[a_u][vm] + t[svm][b2_u] - (t[a_u][um] + t[sm][b2_u]) + (
                    t[vm][svm] - t[um][sm]
                )
                dv2 = t[a_v][um] + t[sm][b2_v] - (t[a_v][vm] + t[svm][b2_v]) + (
                    t[um][sm] - t[vm][svm]
                )
                if screen(
                    cost_u + du2, cost_v + dv2,
                    load_u - pair_load_u + pair_load_v,
                    load_v - pair_load_v + pair_load_u,
                ):
                    if walk_commit(
                        route_u[:pu] + [v, succ_v] + route_u[pu + 2 :],
                        route_v[:pv] + [u, succ_u] + route_v[pv + 2 :],
                    ):
                        return True

        # 2-opt*: exchange tails after u and after v
        ap_u = work.arc_pref[ru]
        ap_v = work.arc_pref[rv]
        lp_u = work.load_pref[ru]
        lp_v = work.load_pref[rv]
        head_cost_u = ap_u[pu]
        head_cost_v = ap_v[pv]
        tail_load_u = load_u - lp_u[pu]
        tail_load_v = load_v - lp_v[pv]
        if b_v:
            tail_cost_v = cost_v - ap_v[pv + 1]
            new_cost_u = head_cost_u + t[um][b_v] + tail_cost_v
        else:
            new_cost_u = head_cost_u + t[um][0]
        if b_u:
            tail_cost_u = cost_u - ap_u[pu + 1]
            new_cost_v = head_cost_v + t[vm][b_u] + tail_cost_u
        else:
            new_cost_v = head_cost_v + t[vm][0]
        if screen(
            new_cost_u, new_cost_v,
            lp_u[pu] + tail_load_v, lp_v[pv] + tail_load_u,
        ):
            if walk_commit(
                route_u[: pu + 1] + route_v[pv + 1 :],
                route_v[: pv + 1] + route_u[pu + 1 :],
            ):
                return True
        return False

    def _relocate_star(self, work: _Work, tested_star: dict) -> bool:
        """Move single requests to their arc-cheapest slot in another (or new) route."""
        improved = False
        ctx = self.ctx
        t = ctx.t
        cap = ctx.capacity
        dem = ctx.demand
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        for u in list(work.pos):
            if u not in work.pos:
                continue
            if tested_star.get(("r", u), -1) >= work.counter:
                continue
            tested_star[("r", u)] = work.counter
            ru, pu = work.pos[u]
            src_route = work.routes[ru]
            src_new = src_route[:pu] + src_route[pu + 1 :]
            um = u + 1
            a_u = src_route[pu - 1] + 1 if pu > 0 else 0
            b_u = src_route[pu + 1] + 1 if pu + 1 < len(src_route) else 0
            src_cost = work.stats[ru][0] - (t[a_u][um] + t[um][b_u] - t[a_u][b_u])
            src_load = work.loads[ru] - dem[u]
            old_u = work.route_pen(ru, cap_pen, tw_pen)
            best = None
            for rv, route in enumerate(work.routes):
                if rv == ru:
                    continue
                cand, ins_arc = self._cheapest_arc_insert(route, u)
                lb = src_cost + work.stats[rv][0] + ins_arc
                new_load_v = work.loads[rv] + dem[u]
                if src_load > cap:
                    lb += cap_pen * (src_load - cap)
                if new_load_v > cap:
                    lb += cap_pen * (new_load_v - cap)
                old = old_u + work.route_pen(rv, cap_pen, tw_pen)
                if lb >= old - _EPS:
                    continue
                pen_src = ctx.penalized_bounded(src_new, cap_pen, tw_pen, old) if src_new else 0.0
                if pen_src is None:
                    continue
                pen_cand = ctx.penalized_bounded(cand, cap_pen, tw_pen, old - pen_src - _EPS)
                if pen_cand is None:
                    continue
                delta = pen_src + pen_cand - old
                if best is None or delta < best[0]:
                    best = (delta, rv, cand)
            if len(src_route) > 1:
                old = old_u
                lb = src_cost + t[0][um] + t[um][0]
                if lb < old - _EPS:
                    pen_src = ctx.penalized_bounded(src_new, cap_pen, tw_pen, old) if src_new else 0.0
                    if pen_src is not None:
                        pen_cand = ctx.penalized_bounded([u], cap_pen, tw_pen, old - pen_src - _EPS)
                        if pen_cand is not None:
                            delta = pen_src + pen_cand - old
                            if best is None or delta < best[0]:
                                best = (delta, -1, [u])
            if best is not None:
                _, rv, cand = best
                if rv < 0:
                    work.commit({ru: src_new}, [cand])
                else:
                    work.commit({ru: src_new, rv: cand})
                improved = True
        return improved

    def _swap_star(self, work: _Work, tested_star: dict) -> bool:
        """Exchange two requests across routes, each at its arc-cheapest slot."""
        improved = False
        ctx = self.ctx
        t = ctx.t
        cap = ctx.capacity
        dem = ctx.demand
        cap_pen, tw_pen = self.cap_pen, self.tw_pen
        for u in list(work.pos):
            if u not in work.pos:
                continue
            if tested_star.get(("s", u), -1) >= work.counter:
                continue
            tested_star[("s", u)] = work.counter
            for v in self._neighbors[u]:
                if u not in work.pos:
                    break
                if v not in work.pos:
                    continue
                ru, pu = work.pos[u]
                rv, pv = work.pos[v]
                if ru == rv:
                    continue
                route_u = work.routes[ru]
                route_v = work.routes[rv]
                um, vm = u + 1, v + 1
                a_u = route_u[pu - 1] + 1 if pu > 0 else 0
                b_u = route_u[pu + 1] + 1 if pu + 1 < len(route_u) else 0
                a_v = route_v[pv - 1] + 1 if pv > 0 else 0
                b_v = route_v[pv + 1] + 1 if pv + 1 < len(route_v) else 0
                without_u = route_u[:pu] + route_u[pu + 1 :]
                without_v = route_v[:pv] + route_v[pv + 1 :]
                cost_wu = work.stats[ru][0] - (t[a_u][um] + t[um][b_u] - t[a_u][b_u])
                cost_wv = work.stats[rv][0] - (t[a_v][vm] + t[vm][b_v] - t[a_v][b_v])
                cand_u, ins_v = self._cheapest_arc_insert(without_u, v)
                cand_v, ins_u = self._cheapest_arc_insert(without_v, u)
                lb = cost_wu + ins_v + cost_wv + ins_u
                load_u = work.loads[ru] - dem[u] + dem[v]
                load_v = work.loads[rv] - dem[v] + dem[u]
                if load_u > cap:
                    lb += cap_pen * (load_u - cap)
                if load_v > cap:
                    lb += cap_pen * (load_v - cap)
                old = work.route_pen(ru, cap_pen, tw_pen) + work.route_pen(rv, cap_pen, tw_pen)
                if lb >= old - _EPS:
                    continue
                pen_u = ctx.penalized_bounded(cand_u, cap_pen, tw_pen, old - _EPS)
                if pen_u is None:
                    continue
                pen_v = ctx.penalized_bounded(cand_v, cap_pen, tw_pen, old - pen_u - _EPS)
                if pen_v is None:
                    continue
                work.commit({ru: cand_u, rv: cand_v})
                improved = True
                break
        return improved

    def _cheapest_arc_insert(self, route: list[int], r: int) -> tuple[list[int], int]:
        """Insert r at the position with the smallest arc detour; returns
        (new visit list, detour)."""
        t = self.ctx.t
        rm = r + 1
        prev = 0
        best_arc = None
        best_pi = 0
        for pi in range(len(route) + 1):
            nxt = route[pi] + 1 if pi < len(route) else 0
            arc = t[prev][rm] + t[rm][nxt] - t[prev][nxt]
            if best_arc is None or arc < best_arc:
                best_arc = arc
                best_pi = pi
            prev = nxt
        return route[:best_pi] + [r] + route[best_pi:], int(best_arc)

    def _request_set_sweep(self, work: _Work) -> bool:
        """serve-request / remove-request neighborhoods (prize-aware)."""
        changed = False
        for r in sorted(set(self.allowed) - work.served()):
            delta, ri, pi = self._best_insertion(work, r)
            if self.prizes[r] - delta > _EPS:
                if ri < 0:
                    work.commit({}, [[r]])
                else:
                    route = work.routes[ri]
                    work.commit({ri: route[:pi] + [r] + route[pi:]})
                changed = True
        for r in sorted(work.served()):
            if r in self.forced_in:
                continue
            saving = self._removal_saving(work, r)
            if saving - self.prizes[r] > _EPS:
                ri, pi = work.pos[r]
                route = work.routes[ri]
                work.commit({ri: route[:pi] + route[pi + 1 :]})
                changed = True
        return changed

    # ------------------------------------------------------------- operators

    def srex_crossover(self, a: Individual, b: Individual) -> Individual:
        """Selective route exchange; parent a's served set is preserved."""
        rng = self.rng
        child_routes = [list(r) for r in a.routes]
        target = set(a.served) - self.forced_out
        if child_routes:
            k = int(rng.integers(1, max(2, len(child_routes) // 2 + 1)))
            drop = set(rng.permutation(len(child_routes))[:k].tolist())
            child_routes = [r for i, r in enumerate(child_routes) if i not in drop]
        present = {v for r in child_routes for v in r}
        if b.routes:
            k = int(rng.integers(1, max(2, len(b.routes) // 2 + 1)))
            for i in rng.permutation(len(b.routes))[:k].tolist():
                filtered = [
                    v for v in b.routes[i] if v not in present and v not in self.forced_out
                ]
                if filtered:
                    child_routes.append(filtered)
                    present.update(filtered)
        missing = sorted(target - present)
        self.rng.shuffle(missing)
        work = _Work(self.ctx, child_routes)
        for r in missing:
            self._apply_best_insertion(work, r)
        child = Individual(giant=[], routes=[])
        self._refresh(child, work)
        return child

    def mutate_random_remove_insert(self, ind: Individual) -> None:
        """Coin-toss mutation: drop a slice of served or insert a slice of unserved."""
        rng = self.rng
        if rng.random() >= self.params.p_mut:
            return
        work = _Work(self.ctx, ind.routes)
        served = work.served()
        if rng.random() < 0.5:
            pool = sorted(served - self.forced_in)
            k = min(int(self.params.alpha_rm * len(served)), len(pool))
            for r in (rng.permutation(pool)[:k].tolist() if k > 0 else []):
                ri, pi = work.pos[r]
                route = work.routes[ri]
                work.commit({ri: route[:pi] + route[pi + 1 :]})
        else:
            pool = sorted(set(self.allowed) - served)
            k = min(int(self.params.alpha_ins * len(pool)), len(pool))
            for r in (rng.permutation(pool)[:k].tolist() if k > 0 else []):
                self._apply_best_insertion(work, r)
        self._refresh(ind, work)

    def optimize_request_set(self, ind: Individual, perturb: bool) -> bool:
        """Drop served requests whose removal saving beats their prize, then add
        unserved ones whose cheapest insertion detour is below their prize.

        With ``perturb`` each saving/detour is scaled by an independent uniform
        draw from [delta_lo, delta_hi] before the comparison.
        """
        rng = self.rng
        lo, hi = self.params.delta_lo, self.params.delta_hi
        work = _Work(self.ctx, ind.routes)
        changed = False
        for r in sorted(work.served()):
            if r in self.forced_in:
                continue
            saving = self._removal_saving(work, r)
            factor = float(rng.uniform(lo, hi)) if perturb else 1.0
            if saving * factor > self.prizes[r] + _EPS:
                ri, pi = work.pos[r]
                route = work.routes[ri]
                work.commit({ri: route[:pi] + route[pi + 1 :]})
                changed = True
        for r in sorted(set(self.allowed) - work.served()):
            delta, ri, pi = self._best_insertion(work, r)
            factor = float(rng.uniform(lo, hi)) if perturb else 1.0
            if delta * factor < self.prizes[r] - _EPS:
                if ri < 0:
                    work.commit({}, [[r]])
                else:
                    route = work.routes[ri]
                    work.commit({ri: route[:pi] + [r] + route[pi:]})
                changed = True
        if changed:
            self._refresh(ind, work)
        return changed

    # ------------------------------------------------------------ main loop

    def _random_individual(self) -> Individual:
        rng = self.rng
        perm = [int(x) for x in rng.permutation(self.allowed)] if self.allowed else []
        if perm and rng.random() < 0.5:
            keep_p = float(rng.uniform(0.2, 1.0))
            kept = [r for r in perm if r in self.forced_in or rng.random() < keep_p]
        else:
            kept = perm
        return self.make_individual(self.split(kept))

    @staticmethod
    def _as_incumbent(ind: Individual) -> _Incumbent:
        return _Incumbent(
            objective=ind.prize_sum - ind.cost,
            routes=tuple(sorted(tuple(r) for r in ind.routes)),
            served=tuple(sorted(ind.giant)),
        )

    def _consider_incumbent(self, ind: Individual) -> None:
        if not ind.feasible:
            return
        cand = self._as_incumbent(ind)
        if not cand.better_than(self.incumbent):
            return
        self.incumbent = cand
        # Intensify a copy around the new best; keep it only if it helps.
        copy = self.make_individual([list(r) for r in ind.routes])
        if self.optimize_request_set(copy, perturb=False):
            self.local_search(copy)
            if copy.feasible:
                cand2 = self._as_incumbent(copy)
                if cand2.better_than(self.incumbent):
                    self.incumbent = cand2

    def _adapt_penalties(self) -> None:
        p = self.params
        cap_window = self._ls_cap_feas[-p.adapt_period :]
        tw_window = self._ls_tw_feas[-p.adapt_period :]
        if not cap_window:
            return
        frac_cap = sum(cap_window) / len(cap_window)
        frac_tw = sum(tw_window) / len(tw_window)
        if frac_cap < 0.2:
            self.cap_pen *= p.penalty_up
        elif frac_cap > 0.6:
            self.cap_pen *= p.penalty_down
        if frac_tw < 0.2:
            self.tw_pen *= p.penalty_up
        elif frac_tw > 0.6:
            self.tw_pen *= p.penalty_down
        self.cap_pen = min(max(self.cap_pen, p.penalty_lo), p.penalty_hi)
        self.tw_pen = min(max(self.tw_pen, p.penalty_lo), p.penalty_hi)

    def _insert_new(self, ind: Individual) -> None:
        self._consider_incumbent(ind)
        self.pop.update(ind, self.cap_pen, self.tw_pen)

    def _construction_order(self) -> list[int]:
        """Release-sorted nearest-neighbor chain over the allowed requests."""
        ctx = self.ctx
        groups: dict[int, list[int]] = {}
        for r in self.allowed:
            rel = ctx.release[r] if ctx.release is not None else 0
            groups.setdefault(rel, []).append(r)
        order: list[int] = []
        prev = 0
        for rel in sorted(groups):
            remaining = set(groups[rel])
            while remaining:
                nxt = min(remaining, key=lambda v: (ctx.t[prev][v + 1], v))
                order.append(nxt)
                remaining.remove(nxt)
                prev = nxt + 1
        return order

    def initialize(self, warm_start=None) -> None:
        if warm_start:
            for sol in warm_start:
                ind = self.make_individual(self._repair([list(r) for r in sol.routes]))
                self.optimize_request_set(ind, perturb=False)
                self._improve(ind)
                self._insert_new(ind)
        base = self.make_individual([[r] for r in sorted(self.forced_in)])
        self._consider_incumbent(base)
        self._improve(base)
        self._insert_new(base)
        seeded = self.make_individual(self.split(self._construction_order()))
        self._improve(seeded)
        self._insert_new(seeded)
        target = self.params.init_pool or (self.params.mu + self.params.lam)
        while len(self.pop.members()) < target:
            ind = self._random_individual()
            self._improve(ind)
            self._insert_new(ind)

    def run(self, warm_start=None) -> PcSolution:
        p = self.params
        t0 = _time.perf_counter()
        if self.inst.n_requests == 0:
            return PcSolution(routes=(), served=frozenset(), objective=0.0)
        for r in sorted(self.forced_in):
            if not self.ctx.is_feasible_alone(r):
                raise PcInfeasibleError(
                    f"forced-in request {r} cannot be served even on its own route"
                )
        self.initialize(warm_start)
        budget_mode = "iterations" if p.budget_s is None else "wall_clock"
        stall = 0
        last_best = self.incumbent.objective if self.incumbent else -math.inf
        while True:
            if p.budget_s is not None and _time.perf_counter() - t0 >= p.budget_s:
                break
            if p.budget_iters is not None and self.iterations >= p.budget_iters:
                break
            if p.stall_iters is not None and stall >= p.stall_iters:
                break
            a = self.pop.tournament(self.rng, self.cap_pen, self.tw_pen)
            b = self.pop.tournament(self.rng, self.cap_pen, self.tw_pen)
            child = self.srex_crossover(a, b)
            self.mutate_random_remove_insert(child)
            self._improve(child)
            if self.rng.random() < p.p_opt:
                if self.optimize_request_set(child, perturb=True):
                    self._improve(child)
            self._insert_new(child)
            self.iterations += 1
            if self.incumbent and self.incumbent.objective > last_best + _EPS:
                last_best = self.incumbent.objective
                stall = 0
            else:
                stall += 1
            if self.iterations % p.adapt_period == 0:
                self._adapt_penalties()
            self.trace.append(self.incumbent.objective if self.incumbent else -math.inf)
        if self.incumbent is None:
            raise PcInfeasibleError("no feasible solution found within budget")
        served = frozenset(v for r in self.incumbent.routes for v in r)
        cost = sum(self.ctx.route_cost(list(r)) for r in self.incumbent.routes)
        objective = float(sum(self.prizes[v] for v in sorted(served)) - cost)
        return PcSolution(
            routes=self.incumbent.routes,
            served=served,
            objective=objective,
            iterations=self.iterations,
            budget_mode=budget_mode,
        )


# ---------------------------------------------------------------- op surface


def solve(inst: PcInstance, params: HgsParams | None = None, warm_start=None) -> PcSolution:
    """Best feasible prize-collecting solution under the given budget."""
    return PcHgs(inst, params).run(warm_start=warm_start)


def _transient(inst: PcInstance, params: HgsParams | None, ind: Individual):
    engine = PcHgs(inst, params)
    out = Individual(giant=list(ind.giant), routes=[list(r) for r in ind.routes])
    engine._refresh(out, _Work(engine.ctx, out.routes))
    return engine, out


def local_search(ind: Individual, inst: PcInstance, params: HgsParams | None = None) -> Individual:
    engine, out = _transient(inst, params, ind)
    engine.local_search(out)
    return out


def srex_crossover(
    a: Individual, b: Individual, inst: PcInstance, params: HgsParams | None = None
) -> Individual:
    return PcHgs(inst, params).srex_crossover(a, b)


def mutate_random_remove_insert(
    ind: Individual, inst: PcInstance, params: HgsParams | None = None
) -> Individual:
    engine, out = _transient(inst, params, ind)
    engine.mutate_random_remove_insert(out)
    return out


def optimize_request_set(
    ind: Individual, inst: PcInstance, params: HgsParams | None, perturb: bool
) -> Individual:
    engine, out = _transient(inst, params, ind)
    engine.optimize_request_set(out, perturb=perturb)
    return out


def update_population(
    pop: Population, new: Individual, params: HgsParams, cap_pen: float = 1.0, tw_pen: float = 1.0
) -> Population:
    pop.update(new, cap_pen, tw_pen)
    return pop
