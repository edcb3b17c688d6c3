"""Budget-constrained LoD selection as a multiple-choice knapsack.

Each mesh must be shown at exactly one LoD, the summed face count may not
exceed the budget, and the summed predicted QoE is maximised.  ``solve_bb`` is
an exact best-first branch-and-bound whose node bounds come from the LP
relaxation, solved by the classic MCKP hull/greedy argument rather than a
general simplex.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dataset import ALLOCATABLE_LODS, LodLevel, MeshDescriptor, ValidationError, lod as _lod
from .features import make_features
from .forest import Forest


class InfeasibleError(ValueError):
    def __init__(self, budget: int, min_budget: int):
        super().__init__(f"budget {budget} is infeasible: the cheapest allocation needs {min_budget} faces")
        self.budget = budget
        self.min_budget = min_budget


class OracleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Option:
    lod_index: int
    faces: int
    qoe: float


@dataclass(frozen=True)
class MeshOptions:
    id: str
    options: tuple[Option, ...]

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ValidationError(f"mesh {self.id} has no options")
        by_lod = sorted(self.options, key=lambda o: o.lod_index)
        if len({o.lod_index for o in by_lod}) != len(by_lod):
            raise ValidationError(f"mesh {self.id}: duplicate LoD index")
        for o in by_lod:
            _lod(o.lod_index)
            if o.faces < 1:
                raise ValidationError(f"mesh {self.id}: face counts must be positive")
            if not math.isfinite(o.qoe):
                raise ValidationError(f"mesh {self.id}: qoe must be finite")
        if any(a.faces <= b.faces for a, b in zip(by_lod, by_lod[1:])):
            raise ValidationError(f"mesh {self.id}: faces must strictly decrease with LoD")


@dataclass(frozen=True)
class AllocationInstance:
    items: tuple[MeshOptions, ...]
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.budget < 1:
            raise ValidationError("budget must be a positive face count")
        if len({m.id for m in self.items}) != len(self.items):
            raise ValidationError("mesh ids must be unique")

    @property
    def min_budget(self) -> int:
        return sum(min(o.faces for o in m.options) for m in self.items)

    @property
    def feasible(self) -> bool:
        return self.min_budget <= self.budget

    def with_budget(self, budget: int) -> AllocationInstance:
        return AllocationInstance(self.items, budget)

    def to_dict(self) -> dict:
        return {
            "meshes": [
                {"id": m.id, "options": [{"lod_index": o.lod_index, "faces": o.faces, "qoe": o.qoe}
                                         for o in m.options]}
                for m in self.items
            ],
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> AllocationInstance:
        try:
            items = tuple(
                MeshOptions(str(m["id"]), tuple(
                    Option(int(o["lod_index"]), int(o["faces"]), float(o["qoe"])) for o in m["options"]
                ))
                for m in d["meshes"]
            )
            return cls(items, int(d["budget"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed instance document: {exc!r}") from None


@dataclass
class AllocationResult:
    method: str
    chosen: dict[str, int | None]  # mesh id -> LoD index, None when excluded
    total_qoe: float
    total_faces: int
    budget: int
    nodes_explored: int = 0
    wall_time: float = 0.0  # seconds
    optimal: bool = False
    excluded: list[str] = field(default_factory=list)

    @property
    def utilization(self) -> float:
        return self.total_faces / self.budget

    @property
    def conforming(self) -> bool:
        """True when exactly one LoD was selected for every mesh."""
        return not self.excluded and all(v is not None for v in self.chosen.values())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "chosen": self.chosen,
            "total_qoe": self.total_qoe,
            "total_faces": self.total_faces,
            "budget": self.budget,
            "utilization": self.utilization,
            "nodes_explored": self.nodes_explored,
            "wall_time_s": self.wall_time,
            "optimal": self.optimal,
            "conforming": self.conforming,
            "excluded": self.excluded,
        }


def _total_qoe(instance: AllocationInstance, choice: Sequence[int | None]) -> float:
    # summed left to right from 0.0; the exhaustive oracle accumulates in the same order
    total = 0.0
    for mesh, m in zip(instance.items, choice):
        if m is not None:
            total += mesh.options[m].qoe
    return total


def _result(method: str, instance: AllocationInstance, choice: Sequence[int | None], t0: float,
            nodes: int = 0, optimal: bool = False) -> AllocationResult:
    wall = time.perf_counter() - t0
    chosen, excluded, faces = {}, [], 0
    for mesh, m in zip(instance.items, choice):
        if m is None:
            chosen[mesh.id] = None
            excluded.append(mesh.id)
        else:
            chosen[mesh.id] = mesh.options[m].lod_index
            faces += mesh.options[m].faces
    return AllocationResult(method, chosen, _total_qoe(instance, choice), faces, instance.budget,
                            nodes, wall, optimal, excluded)


def _require_feasible(instance: AllocationInstance) -> None:
    if not instance.feasible:
        raise InfeasibleError(instance.budget, instance.min_budget)


def build_instance(
    meshes: Sequence[MeshDescriptor],
    distances: Mapping[str, float],
    forest: Forest,
    budget: int,
    lods: Iterable[LodLevel | int] = ALLOCATABLE_LODS,
) -> AllocationInstance:
    """One option per (mesh, LoD) with QoE predicted by the forest at the mesh's distance."""
    lods = [_lod(v) for v in lods]
    rows = [make_features(mesh, level, distances[mesh.id]).as_array() for mesh in meshes for level in lods]
    qoe = forest.predict(np.array(rows)) if rows else np.empty(0)
    items, k = [], 0
    for mesh in meshes:
        opts = []
        for level in lods:
            opts.append(Option(level.index, mesh.faces(level), float(qoe[k])))
            k += 1
        items.append(MeshOptions(mesh.id, tuple(opts)))
    return AllocationInstance(tuple(items), int(budget))


# -- LP relaxation --------------------------------------------------------------

@dataclass
class LPSolution:
    feasible: bool
    bound: float
    x: dict[tuple[int, int], float] = field(default_factory=dict)  # nonzero entries only
    # (mesh, cheaper option, dearer option, fraction moved to the dearer one)
    fractional: tuple[int, int, int, float] | None = None

    @property
    def integral(self) -> bool:
        return self.feasible and self.fractional is None

    def choice(self, n_meshes: int) -> list[int]:
        out = [-1] * n_meshes
        for (n, m), v in self.x.items():
            if v == 1.0:
                out[n] = m
        return out


def lp_hull(options: Sequence[Option], allowed: Iterable[int]) -> list[int]:
    """Option indices on the upper concave frontier of faces vs qoe.

    Sorted by increasing faces; options dominated by a cheaper one and points
    on or under a chord between neighbours are dropped, so the incremental
    efficiencies strictly decrease along the returned list.
    """
    pts = sorted(allowed, key=lambda m: (options[m].faces, -options[m].qoe, m))
    hull: list[int] = []
    for m in pts:
        f2, q2 = options[m].faces, options[m].qoe
        if hull and (options[hull[-1]].faces == f2 or options[hull[-1]].qoe >= q2):
            continue
        while len(hull) >= 2:
            f0, q0 = options[hull[-2]].faces, options[hull[-2]].qoe
            f1, q1 = options[hull[-1]].faces, options[hull[-1]].qoe
            if (q1 - q0) * (f2 - f1) <= (q2 - q1) * (f1 - f0):
                hull.pop()
            else:
                break
        hull.append(m)
    return hull


def solve_lp_relaxation(instance: AllocationInstance,
                        fixed: Mapping[tuple[int, int], int] | None = None) -> LPSolution:
    """LP optimum of the relaxed problem with some variables pinned to 0 or 1.

    Free meshes start at their cheapest frontier option; frontier upgrades are
    then bought in decreasing qoe-per-face order until the budget binds, the
    binding upgrade taken fractionally.  At most one mesh ends up fractional.
    """
    fixed = fixed or {}
    pinned: dict[int, int] = {}
    banned: set[tuple[int, int]] = set()
    for (n, m), v in fixed.items():
        if v == 1:
            if pinned.get(n, m) != m:
                return LPSolution(False, -math.inf)
            pinned[n] = m
        else:
            banned.add((n, m))
    if any((n, m) in banned for n, m in pinned.items()):
        return LPSolution(False, -math.inf)

    x: dict[tuple[int, int], float] = {}
    faces = 0
    value = 0.0
    hulls: dict[int, list[int]] = {}
    for n, mesh in enumerate(instance.items):
        if n in pinned:
            m = pinned[n]
        else:
            allowed = [m for m in range(len(mesh.options)) if (n, m) not in banned]
            if not allowed:
                return LPSolution(False, -math.inf)
            hulls[n] = lp_hull(mesh.options, allowed)
            m = hulls[n][0]
        x[(n, m)] = 1.0
        faces += mesh.options[m].faces
        value += mesh.options[m].qoe
    if faces > instance.budget:
        return LPSolution(False, -math.inf)

    def segment(n: int, pos: int):
        a, b = hulls[n][pos], hulls[n][pos + 1]
        oa, ob = instance.items[n].options[a], instance.items[n].options[b]
        dq, df = ob.qoe - oa.qoe, ob.faces - oa.faces
        return (-dq / df, n, pos, a, b, dq, df)

    # a per-mesh cursor keeps each mesh's upgrades in frontier order even if
    # rounding makes two consecutive efficiencies compare out of order
    heap = [segment(n, 0) for n, h in hulls.items() if len(h) > 1]
    heapq.heapify(heap)
    remaining = instance.budget - faces
    fractional = None
    while heap and remaining > 0:
        _, n, pos, a, b, dq, df = heapq.heappop(heap)
        if df <= remaining:
            remaining -= df
            value += dq
            del x[(n, a)]
            x[(n, b)] = 1.0
            if pos + 2 < len(hulls[n]):
                heapq.heappush(heap, segment(n, pos + 1))
        else:
            t = remaining / df
            value += t * dq
            x[(n, a)] = 1.0 - t
            x[(n, b)] = t
            fractional = (n, a, b, t)
            break
    return LPSolution(True, value, x, fractional)


# -- branch and bound -----------------------------------------------------------

@dataclass
class BBNode:
    fixed: dict[tuple[int, int], int]
    bound: float
    solution: dict[tuple[int, int], float]


def solve_bb(instance: AllocationInstance, warm_start: bool = True,
             trace: list[BBNode] | None = None) -> AllocationResult:
    """Exact optimum by best-first branch-and-bound.

    Nodes are popped in order of their parent's LP bound, relaxed, and fathomed
    when infeasible or not better than the incumbent.  Integral LP solutions
    update the incumbent; otherwise the branch is on the dearer option of the
    single fractional mesh (x = 0 and x = 1 children).
    """
    _require_feasible(instance)
    t0 = time.perf_counter()
    n_meshes = len(instance.items)
    best_choice: list[int] | None = None
    best_val = -math.inf
    if warm_start:
        best_choice = _greedy_choice(instance, "instance")
        best_val = _total_qoe(instance, best_choice)

    counter = itertools.count()
    queue = [(-math.inf, next(counter), {})]
    nodes = 0
    while queue:
        neg_parent, _, fixed = heapq.heappop(queue)
        if -neg_parent <= best_val:
            continue
        nodes += 1
        lp = solve_lp_relaxation(instance, fixed)
        if trace is not None:
            trace.append(BBNode(dict(fixed), lp.bound, dict(lp.x)))
        if not lp.feasible or lp.bound <= best_val:
            continue
        if lp.fractional is None:
            choice = lp.choice(n_meshes)
            val = _total_qoe(instance, choice)
            if val > best_val:
                best_val, best_choice = val, choice
        else:
            n, _, b, _ = lp.fractional
            for v in (0, 1):
                child = dict(fixed)
                child[(n, b)] = v
                heapq.heappush(queue, (-lp.bound, next(counter), child))
    assert best_choice is not None
    return _result("bb", instance, best_choice, t0, nodes, optimal=True)


# -- baselines ------------------------------------------------------------------

def _cheapest(mesh: MeshOptions) -> int:
    return min(range(len(mesh.options)), key=lambda m: (mesh.options[m].faces, -mesh.options[m].qoe))


def _best_within(mesh: MeshOptions, room: int, start: int | None = None) -> int | None:
    """Highest-qoe option with faces <= room; ties go to fewer faces."""
    best = start
    for m, o in enumerate(mesh.options):
        if o.faces > room:
            continue
        if best is None:
            best = m
            continue
        b = mesh.options[best]
        if o.qoe > b.qoe or (o.qoe == b.qoe and o.faces < b.faces):
            best = m
    return best


def _upgrade_order(instance: AllocationInstance, order: str) -> list[int]:
    idx = list(range(len(instance.items)))
    if order == "instance":
        return idx
    if order == "efficiency":
        def gain_per_face(n):
            mesh = instance.items[n]
            lo = mesh.options[_cheapest(mesh)]
            top = max(mesh.options, key=lambda o: (o.qoe, -o.faces))
            return (top.qoe - lo.qoe) / (top.faces - lo.faces) if top.faces > lo.faces else 0.0
        return sorted(idx, key=lambda n: (-gain_per_face(n), n))
    raise ValueError(f"unknown greedy order {order!r}")


def _greedy_choice(instance: AllocationInstance, order: str) -> list[int]:
    choice = [_cheapest(m) for m in instance.items]
    used = sum(m.options[c].faces for m, c in zip(instance.items, choice))
    for n in _upgrade_order(instance, order):
        mesh = instance.items[n]
        cur = choice[n]
        room = instance.budget - used + mesh.options[cur].faces
        new = _best_within(mesh, room, start=cur)
        used += mesh.options[new].faces - mesh.options[cur].faces
        choice[n] = new
    return choice


def solve_greedy(instance: AllocationInstance, order: str = "instance") -> AllocationResult:
    """Everything at its cheapest LoD, then each mesh in turn upgraded as far as the leftover budget allows."""
    _require_feasible(instance)
    t0 = time.perf_counter()
    return _result("greedy", instance, _greedy_choice(instance, order), t0)


def solve_equal(instance: AllocationInstance) -> AllocationResult:
    """Per-mesh share floor(B/N); meshes with nothing under their share are left out."""
    t0 = time.perf_counter()
    share = instance.budget // max(1, len(instance.items))
    choice = [_best_within(mesh, share) for mesh in instance.items]
    return _result("equal", instance, choice, t0)


def exhaustive_oracle(instance: AllocationInstance, cap: int = 20_000_000) -> AllocationResult:
    """Enumerate every assignment; ties go to fewer faces, then the lexicographically first choice."""
    sizes = [len(m.options) for m in instance.items]
    if math.prod(sizes) > cap:
        raise OracleCapExceeded(f"{math.prod(sizes)} assignments exceed the cap of {cap}")
    _require_feasible(instance)
    t0 = time.perf_counter()
    q = np.zeros(())
    f = np.zeros((), dtype=np.int64)
    for mesh in instance.items:
        q = q[..., None] + np.array([o.qoe for o in mesh.options])
        f = f[..., None] + np.array([o.faces for o in mesh.options], dtype=np.int64)
    ok = f <= instance.budget
    top = q[ok].max()
    ok &= q == top
    ok &= f == f[ok].min()
    flat = int(np.flatnonzero(ok)[0])
    choice = [int(i) for i in np.unravel_index(flat, sizes)] if sizes else []
    return _result("exhaustive", instance, choice, t0, optimal=True)


SOLVERS: dict[str, Callable[[AllocationInstance], AllocationResult]] = {
    "bb": solve_bb,
    "greedy": solve_greedy,
    "equal": solve_equal,
    "exhaustive": exhaustive_oracle,
}
