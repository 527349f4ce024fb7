"""Multi-year dual-homed planning: traffic, spectrum and fiber-pair assignment,
transponder and license dimensioning, and result archives."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._npz import load_npz, save_npz
from .qot import FilterPenaltyTable, QoTPenalties, path_gsnr, supported_bitrate
from .spectrum import BAND_NAMES, BandLayout, OpticalParameters, band_index, band_of_slot
from .topology import (
    CandidatePath,
    HierarchyMap,
    LandPair,
    Topology,
    candidate_table,
    hierarchy_subgraph,
    land_pairs,
)

EPS = 1e-9
ROLES = ("primary", "secondary")
KINDS = ("standalone", "colocated")
ARCHIVE_GROUPS = ("bvt_info", "link_info", "path_GSNR_info", "node_capacity_profile_array", "segments_latency")


class PlanningError(RuntimeError):
    pass


class BlockingError(PlanningError):
    def __init__(self, node: int, year: int, path: Sequence[int] | None):
        self.node, self.year, self.path = node, year, tuple(path) if path is not None else None
        where = "intra-site" if path is None else "->".join(map(str, path))
        super().__init__(f"spectrum blocked: node {node}, year {year}, path {where}")


# ---------------------------------------------------------------------- config


@dataclass(frozen=True)
class PlannerConfig:
    period_years: int = 10
    bvt_bitrates: tuple[float, ...] = (400, 320, 260, 200, 120, 64)
    license_capacities: tuple[float, ...] = (100, 80, 65, 50, 30, 16)
    licenses_per_bvt: int = 4
    fp_max: int = 20
    band_layout: BandLayout = BandLayout((64, 80), 160)
    kpair_standalone: int = 5
    kpair_colocated: int = 3
    k_paths: int = 3
    cagr: float = 0.4
    dual_homing_split: float = 0.5
    latency_us_per_km: float = 5.0

    def __post_init__(self):
        if self.period_years < 1:
            raise ValueError("period_years must be >= 1")
        b = self.bvt_bitrates
        if any(y >= x for x, y in zip(b, b[1:])):
            raise ValueError("bvt_bitrates must be strictly descending")
        if len(b) != len(self.license_capacities):
            raise ValueError("bvt_bitrates and license_capacities differ in length")
        if self.fp_max < 1:
            raise ValueError("fp_max must be >= 1")
        if not 0 < self.dual_homing_split < 1:
            raise ValueError("dual_homing_split must be in (0, 1)")
        if min(self.kpair_standalone, self.kpair_colocated, self.k_paths) < 1:
            raise ValueError("path and pair counts must be >= 1")
        for rate, cap in zip(b, self.license_capacities):
            if cap <= 0 or math.ceil(rate / cap - EPS) > self.licenses_per_bvt:
                raise ValueError(f"BVT {rate}G needs more than {self.licenses_per_bvt} licenses")

    @property
    def max_bitrate(self) -> float:
        return float(self.bvt_bitrates[0])

    def license_capacity(self, bitrate: float) -> float:
        for rate, cap in zip(self.bvt_bitrates, self.license_capacities):
            if rate == bitrate:
                return float(cap)
        raise PlanningError(f"no BVT type with bitrate {bitrate}")


# --------------------------------------------------------------------- traffic


@dataclass
class TrafficProfile:
    base_capacity: np.ndarray
    annual_added: np.ndarray  # [year, node]
    bypass_nodes: frozenset[int] = frozenset()


def generate_initial_traffic(
    nodes: int | Iterable[int],
    bypass: Iterable[int],
    mc_steps: int,
    min_rate: float,
    max_rate: float,
    seed: int,
    cache_path: str | Path | None = None,
) -> np.ndarray:
    """Per-node mean of ``mc_steps`` uniform draws in [min_rate, max_rate]."""
    n = nodes if isinstance(nodes, int) else len(list(nodes))
    if n < 1:
        raise ValueError("empty node set")
    if mc_steps < 1:
        raise ValueError("mc_steps must be >= 1")
    if min_rate > max_rate:
        raise ValueError("min_rate must not exceed max_rate")
    if cache_path is not None and Path(cache_path).exists():
        base = load_npz(cache_path)["base_capacity"]
        if base.shape == (n,):
            return base
    if min_rate == max_rate:
        base = np.full(n, float(min_rate))
    else:
        rng = np.random.default_rng(seed)
        base = rng.uniform(min_rate, max_rate, size=(mc_steps, n)).mean(axis=0)
    base[sorted(set(int(b) for b in bypass))] = 0.0
    if cache_path is not None:
        Path(cache_path).parent.mkdir(parents=True, exist_ok=True)
        save_npz(cache_path, {"base_capacity": base})
    return base


def simulate_traffic_growth(base: np.ndarray, cagr: float, years: int) -> np.ndarray:
    """Added traffic per year: the base in year 0, then CAGR increments."""
    if cagr <= -1:
        raise ValueError("cagr must be > -1")
    base = np.asarray(base, dtype=float)
    totals = base[None, :] * (1 + cagr) ** np.arange(years)[:, None]
    added = totals.copy()
    added[1:] = totals[1:] - totals[:-1]
    return added


def make_traffic_profile(base: np.ndarray, cagr: float, years: int, bypass: Iterable[int] = ()) -> TrafficProfile:
    bypass = frozenset(int(b) for b in bypass)
    base = np.array(base, dtype=float)
    base[sorted(bypass)] = 0.0
    return TrafficProfile(base, simulate_traffic_growth(base, cagr, years), bypass)


# ---------------------------------------------------------------------- state


class SpectrumState:
    """Slot occupancy per (slot, link, fiber pair) plus the fiber-pair ledgers.

    Occupied cells hold the id of the lightpath that owns them (0 = free).
    Changes made between :meth:`begin` and :meth:`rollback` are undone.
    """

    def __init__(self, num_slots: int, num_links: int, num_nodes: int, fp_max: int, years: int):
        self.occupancy = np.zeros((num_slots, num_links, fp_max), dtype=np.int32)
        self.colocated_occupancy = np.zeros((num_slots, num_nodes, fp_max), dtype=np.int32)
        self.year_fp = np.zeros((years, num_links), dtype=np.int64)
        self.year_fp_colocated = np.zeros((years, num_nodes), dtype=np.int64)
        self.next_id = 1
        self._log: list | None = None
        self._mark_id = 1

    @property
    def fp_max(self) -> int:
        return self.occupancy.shape[2]

    def begin(self) -> None:
        self._log = []
        self._mark_id = self.next_id

    def rollback(self) -> None:
        for arr, idx, old in reversed(self._log or []):
            arr[idx] = old
        self._log = None
        self.next_id = self._mark_id

    def commit(self) -> None:
        self._log = None

    def _write(self, arr: np.ndarray, idx, value) -> None:
        if self._log is not None:
            self._log.append((arr, idx, np.copy(arr[idx])))
        arr[idx] = value

    def place(self, links: Sequence[int] | None, node: int, slot: int, tier: int, year: int) -> int:
        lp_id = self.next_id
        self.next_id += 1
        if links is None:
            if self.colocated_occupancy[slot, node, tier]:
                raise PlanningError("double allocation")
            self._write(self.colocated_occupancy, (slot, node, tier), lp_id)
            col = self.year_fp_colocated[year:, node]
            self._write(self.year_fp_colocated, (slice(year, None), node), np.maximum(col, tier + 1))
            return lp_id
        links = list(links)
        if np.any(self.occupancy[slot, links, tier]):
            raise PlanningError("double allocation")
        self._write(self.occupancy, (slot, links, tier), lp_id)
        for l in links:
            col = self.year_fp[year:, l]
            if np.any(col < tier + 1):
                self._write(self.year_fp, (slice(year, None), l), np.maximum(col, tier + 1))
        return lp_id


def init_planner(
    cfg: PlannerConfig, level: int, minimum_level: int, num_slots: int, num_links: int, num_nodes: int
) -> SpectrumState:
    if not 1 <= level <= minimum_level:
        raise PlanningError(f"invalid level {level} for minimum level {minimum_level}")
    if cfg.band_layout.total_slots != num_slots:
        raise PlanningError(f"band layout has {cfg.band_layout.total_slots} slots, grid has {num_slots}")
    return SpectrumState(num_slots, num_links, num_nodes, cfg.fp_max, cfg.period_years)


# ----------------------------------------------------------------- assignment


@dataclass(frozen=True)
class Lightpath:
    id: int
    level: int
    year: int
    src: int
    dst: int
    role: str
    kind: str
    slot: int
    fp: int
    band: str
    bitrate: float
    gsnr: float
    links: tuple[int, ...]


@dataclass
class AssignmentRecord:
    lightpaths: list[Lightpath] = field(default_factory=list)
    new_fp_km: float = 0.0

    @property
    def bitrate_sum(self) -> float:
        return float(sum(lp.bitrate for lp in self.lightpaths))

    @property
    def last_band(self) -> int:
        return band_index(self.lightpaths[-1].band) if self.lightpaths else 0


@dataclass(frozen=True)
class PathQoT:
    gsnr_db: np.ndarray  # [slot]
    bitrate: np.ndarray  # [slot], 0 where infeasible


def assign_spectrum(
    path: CandidatePath | None,
    path_type: str,
    year: int,
    traffic_to_assign: float,
    bvt_count: int,
    node: int,
    qot: PathQoT | None,
    state: SpectrumState,
    cfg: PlannerConfig,
    link_lengths: np.ndarray,
    level: int = 0,
    kind: str = "standalone",
) -> AssignmentRecord:
    """Place BVTs on one path: fiber-pair tiers ascending, exact-fit then first-fit.

    ``path=None`` is the intra-site primary of a co-located node, which always
    runs at the top bitrate. Extra BVTs are placed until the summed bitrate
    covers ``traffic_to_assign``.
    """
    if path_type not in ROLES:
        raise ValueError(f"unknown path type {path_type!r}")
    layout = cfg.band_layout
    n_slots = layout.total_slots
    if path is None:
        links = None
        dst = node
        bitrate = np.full(n_slots, cfg.max_bitrate)
        gsnr = np.full(n_slots, np.nan)
        before = 0.0
    else:
        links = list(path.link_indices)
        dst = path.dest
        bitrate, gsnr = qot.bitrate, qot.gsnr_db
        before = state.year_fp[year, links].copy()
    requested = cfg.max_bitrate
    record = AssignmentRecord()

    while len(record.lightpaths) < bvt_count or record.bitrate_sum < traffic_to_assign - EPS:
        chosen = None
        for tier in range(state.fp_max):
            if links is None:
                free = state.colocated_occupancy[:, node, tier] == 0
            else:
                free = ~state.occupancy[:, links, tier].any(axis=1)
            feasible = free & (bitrate > 0)
            hits = np.flatnonzero(feasible & (bitrate == requested))
            if hits.size == 0:
                hits = np.flatnonzero(feasible)
            if hits.size:
                chosen = (int(hits[0]), tier)
                break
        if chosen is None:
            raise BlockingError(node, year, None if path is None else path.nodes)
        slot, tier = chosen
        lp_id = state.place(links, node, slot, tier, year)
        record.lightpaths.append(
            Lightpath(
                id=lp_id, level=level, year=year, src=node, dst=dst, role=path_type, kind=kind,
                slot=slot, fp=tier, band=band_of_slot(layout, slot), bitrate=float(bitrate[slot]),
                gsnr=float(gsnr[slot]), links=tuple(links or ()),
            )
        )
    if links is not None:
        grown = state.year_fp[year, links] - before
        record.new_fp_km = float(np.dot(grown, link_lengths[links]))
    return record


# -------------------------------------------------------------- level ledger


@dataclass
class LevelLedger:
    level: int
    years: int
    num_nodes: int
    num_links: int
    subnet_links: tuple[int, ...] = ()
    lightpaths: list[Lightpath] = field(default_factory=list)
    bvt_cum: np.ndarray = None  # [year, band] transponders
    license_cum: np.ndarray = None  # [year, band]
    traffic_flow: np.ndarray = None  # [year, link]
    node_capacity_profile: np.ndarray = None  # [year, node] arrivals
    latency: np.ndarray = None  # [node, 2] microseconds
    destinations: np.ndarray = None  # [node, 2]
    selected_links: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = field(default_factory=dict)
    service: list[tuple] = field(default_factory=list)  # (node, year, kind, role, demand, residual, new)
    year_fp: np.ndarray = None
    year_fp_colocated: np.ndarray = None
    degree_number: np.ndarray = None
    effective_fp_km: np.ndarray = None

    def __post_init__(self):
        y, n, l = self.years, self.num_nodes, self.num_links
        self.bvt_cum = np.zeros((y, 3), dtype=np.int64)
        self.license_cum = np.zeros((y, 3), dtype=np.int64)
        self.traffic_flow = np.zeros((y, l))
        self.node_capacity_profile = np.zeros((y, n))
        self.latency = np.full((n, 2), np.nan)
        self.destinations = np.full((n, 2), -1, dtype=np.int64)


@dataclass
class _Bvt:
    bitrate: float
    capacity: float  # per license
    band: int
    carried: float = 0.0

    @property
    def licenses(self) -> int:
        return int(math.ceil(self.carried / self.capacity - EPS)) if self.carried > EPS else 0


def _residual(bvts: list[_Bvt]) -> float:
    return float(sum(b.bitrate - b.carried for b in bvts))


def _consume(bvts: list[_Bvt], amount: float) -> float:
    for b in bvts:
        if amount <= EPS:
            break
        take = min(b.bitrate - b.carried, amount)
        if take > 0:
            b.carried += take
            amount -= take
    return amount


@dataclass
class PlanContext:
    topology: Topology
    hierarchy: HierarchyMap
    cfg: PlannerConfig
    link_gsnr_db: np.ndarray  # [link, slot]
    params: OpticalParameters
    penalties: QoTPenalties = QoTPenalties()
    filter_table: FilterPenaltyTable = FilterPenaltyTable()
    bypass_nodes: frozenset[int] = frozenset()
    _path_cache: dict = field(default_factory=dict, repr=False)

    @property
    def link_lengths(self) -> np.ndarray:
        return self.topology.link_lengths

    def path_qot(self, path: CandidatePath) -> PathQoT:
        hit = self._path_cache.get(path.nodes)
        if hit is None:
            degrees = np.isfinite(self.topology.adjacency).sum(axis=1)
            penalty = self.filter_table.lookup(path.num_hops, int(degrees[list(path.nodes)].max()))
            pen = QoTPenalties(self.penalties.trx_snr_db, penalty, self.penalties.aging_margin_db)
            g = path_gsnr(self.link_gsnr_db[list(path.link_indices), :], pen)
            rates = supported_bitrate(g, self.params)
            unknown = set(np.unique(rates[rates > 0]).tolist()) - set(map(float, self.cfg.bvt_bitrates))
            if unknown:
                raise PlanningError(f"modulation bitrates {sorted(unknown)} have no BVT type")
            hit = PathQoT(np.asarray(g, dtype=float), rates)
            self._path_cache[path.nodes] = hit
        return hit


def _cost_key(records: Sequence[AssignmentRecord]) -> tuple:
    return (
        round(sum(r.new_fp_km for r in records), 9),
        sum(len(r.lightpaths) for r in records),
        records[-1].last_band if records else 0,
    )


def run_level_plan(
    ctx: PlanContext,
    level: int,
    next_level: int,
    demand: np.ndarray,
    state: SpectrumState,
    minimum_level: int,
) -> LevelLedger:
    """Plan one hierarchy level over all years on the shared spectrum state.

    ``demand[year, node]`` is the traffic added at each source that year. Each
    source is dual-homed to two members of ``next_level``; both paths are sized
    for the full demand and the traffic itself is split between them.
    """
    cfg, topo, h = ctx.cfg, ctx.topology, ctx.hierarchy
    years, n_nodes = cfg.period_years, topo.num_nodes
    if demand.shape != (years, n_nodes):
        raise PlanningError(f"demand must have shape {(years, n_nodes)}")
    if np.any(demand < 0):
        raise PlanningError("negative demand")

    subnet, cost = hierarchy_subgraph(topo, h, level, minimum_level)
    dests = sorted(h.members(next_level))
    if not dests:
        raise PlanningError(f"HL{next_level} has no nodes to home HL{level} traffic")
    standalone = sorted(h.standalone(level) - ctx.bypass_nodes)
    colocated = sorted(h.colocated(level) - h.standalone(level) - ctx.bypass_nodes)
    for n in colocated:
        if n not in dests:
            raise PlanningError(f"co-located node {n} at HL{level} has no HL{next_level} function on site")

    active = [n for n in standalone if demand[:, n].sum() > 0]
    table = candidate_table(cost, topo, active, dests, cfg.k_paths)
    paths = {p.index: p for p in table}
    pairs: dict[int, list[LandPair]] = {n: [] for n in active}
    for pair in land_pairs(active, table, cfg.kpair_standalone):
        pairs[pair.src].append(pair)
    for n in active:
        if not pairs[n]:
            raise PlanningError(f"no dual-homing path pair for HL{level} node {n}")

    co_active = [n for n in colocated if demand[:, n].sum() > 0]
    full_cost = np.where(np.isfinite(topo.adjacency), topo.adjacency, np.inf)
    co_table = candidate_table(full_cost, topo, co_active, dests, cfg.k_paths)
    co_paths: dict[int, list[CandidatePath]] = {n: [] for n in co_active}
    for p in co_table:
        if len(co_paths[p.src]) < cfg.kpair_colocated:
            co_paths[p.src].append(p)
    for n in co_active:
        if not co_paths[n]:
            raise PlanningError(f"no secondary path for co-located HL{level} node {n}")

    ledger = LevelLedger(level, years, n_nodes, topo.num_links, subnet_links=subnet)
    bvts: dict[tuple[int, str, str], list[_Bvt]] = {}
    current: dict[int, tuple[CandidatePath | None, CandidatePath]] = {}
    split = cfg.dual_homing_split
    lengths = ctx.link_lengths

    def route(n: int, y: int, kind: str, options: list[tuple[CandidatePath | None, CandidatePath]]):
        a = float(demand[y, n])
        keys = {r: (n, kind, r) for r in ROLES}
        residual = {r: _residual(bvts.setdefault(keys[r], [])) for r in ROLES}
        need = {r: max(0.0, a - residual[r]) for r in ROLES}
        new = {r: 0.0 for r in ROLES}
        if max(need.values()) > EPS:
            best, last_error = None, None
            for option in options:
                state.begin()
                try:
                    recs = _assign_pair(option, need, n, y, kind)
                except BlockingError as exc:
                    state.rollback()
                    last_error = exc
                    continue
                state.rollback()
                key = _cost_key(recs)
                if best is None or key < best[0]:
                    best = (key, option)
            if best is None:
                raise last_error
            option = best[1]
            recs = _assign_pair(option, need, n, y, kind)
            state.commit()
            current[n] = option
            for rec, r in zip(recs, ROLES):
                for lp in rec.lightpaths:
                    ledger.lightpaths.append(lp)
                    bvts[keys[r]].append(_Bvt(lp.bitrate, cfg.license_capacity(lp.bitrate), band_index(lp.band)))
                new[r] = rec.bitrate_sum
        for r in ROLES:
            ledger.service.append((n, y, kind, r, a, residual[r], new[r]))
            left = _consume(bvts[keys[r]], a)
            if left > 1e-6:
                raise PlanningError(f"node {n} year {y}: {left:.3f} Gbps left unserved")
        if a > 0:
            prim, sec = current[n]
            for p, share in ((prim, split), (sec, 1 - split)):
                dst = n if p is None else p.dest
                ledger.node_capacity_profile[y, dst] += a * share
                if p is not None:
                    ledger.traffic_flow[y:, list(p.link_indices)] += a * share

    def _assign_pair(option, need, n, y, kind):
        recs = []
        for p, r in zip(option, ROLES):
            count = int(math.ceil(need[r] / cfg.max_bitrate - EPS)) if need[r] > EPS else 0
            q = None if p is None else ctx.path_qot(p)
            recs.append(assign_spectrum(p, r, y, need[r], count, n, q, state, cfg, lengths, level, kind))
        return recs

    options_sa = {n: [(paths[pr.primary_path], paths[pr.secondary_path]) for pr in pairs[n]] for n in active}
    options_co = {n: [(None, p) for p in co_paths[n]] for n in co_active}
    for y in range(years):
        for n in active:
            if demand[y, n] > 0:
                route(n, y, "standalone", options_sa[n])
        for n in co_active:
            if demand[y, n] > 0:
                route(n, y, "colocated", options_co[n])

        bvt = np.zeros(3, dtype=np.int64)
        lic = np.zeros(3, dtype=np.int64)
        for group in bvts.values():
            for b in group:
                bvt[b.band - 1] += 2
                lic[b.band - 1] += 2 * b.licenses
        ledger.bvt_cum[y] = bvt
        ledger.license_cum[y] = lic

    for n, (prim, sec) in current.items():
        for j, p in enumerate((prim, sec)):
            if p is None:
                ledger.latency[n, j] = 0.0
                ledger.destinations[n, j] = n
            else:
                ledger.latency[n, j] = p.distance * cfg.latency_us_per_km
                ledger.destinations[n, j] = p.dest
        ledger.selected_links[n] = (() if prim is None else prim.link_indices, sec.link_indices)

    ledger.year_fp = state.year_fp.copy()
    ledger.year_fp_colocated = state.year_fp_colocated.copy()
    ledger.effective_fp_km = ledger.year_fp @ lengths
    incidence = fp_incidence(topo, ledger.year_fp)
    members = sorted(h.standalone(level))
    ledger.degree_number = incidence[:, members].mean(axis=1) if members else np.zeros(years)
    return ledger


def fp_incidence(topo: Topology, year_fp: np.ndarray) -> np.ndarray:
    """Active fiber pairs incident to each node, [year, node]."""
    out = np.zeros((year_fp.shape[0], topo.num_nodes), dtype=year_fp.dtype)
    for i, link in enumerate(topo.links):
        out[:, link.a] += year_fp[:, i]
        out[:, link.b] += year_fp[:, i]
    return out


# ------------------------------------------------------------------ whole plan


@dataclass
class PlanResult:
    levels: list[int]
    ledgers: dict[int, LevelLedger]
    state: SpectrumState

    @property
    def lightpaths(self) -> list[Lightpath]:
        return [lp for lvl in self.levels for lp in self.ledgers[lvl].lightpaths]


def plan_network(ctx: PlanContext, levels: Sequence[int], traffic: TrafficProfile) -> PlanResult:
    """Run the level planner from the lowest level upward.

    The traffic profile feeds the first level; every later level is fed by
    the traffic that arrived at its nodes from the level below.
    """
    levels = list(levels)
    if not levels or levels != sorted(levels, reverse=True):
        raise PlanningError("levels must be listed from the lowest (largest number) upward")
    for lvl in levels:
        if lvl not in ctx.hierarchy.levels:
            raise PlanningError(f"HL{lvl} is not defined")
    cfg, topo = ctx.cfg, ctx.topology
    minimum_level = max(ctx.hierarchy.levels)
    state = init_planner(cfg, levels[-1], minimum_level, cfg.band_layout.total_slots, topo.num_links, topo.num_nodes)
    demand = np.asarray(traffic.annual_added, dtype=float)
    members = sorted(ctx.hierarchy.members(levels[0]))
    mask = np.zeros(topo.num_nodes, dtype=bool)
    mask[members] = True
    demand = np.where(mask[None, :], demand, 0.0)
    ledgers = {}
    for i, lvl in enumerate(levels):
        upper = [l for l in ctx.hierarchy.levels if l < lvl]
        if not upper:
            raise PlanningError(f"HL{lvl} traffic has no upper level to reach")
        nxt = levels[i + 1] if i + 1 < len(levels) else max(upper)
        ledgers[lvl] = run_level_plan(ctx, lvl, nxt, demand, state, minimum_level)
        demand = ledgers[lvl].node_capacity_profile
    return PlanResult(levels, ledgers, state)


def audit_plan(result: PlanResult, cfg: PlannerConfig) -> list[str]:
    """Independent re-check of exclusivity, fiber-pair monotonicity and the
    service guarantee. Returns a list of violations (empty when clean)."""
    problems = []
    state = result.state
    count = np.zeros(state.occupancy.shape, dtype=np.int64)
    co_count = np.zeros(state.colocated_occupancy.shape, dtype=np.int64)
    need_fp = np.zeros_like(state.year_fp)
    for lp in result.lightpaths:
        if lp.links:
            count[lp.slot, list(lp.links), lp.fp] += 1
            for l in lp.links:
                need_fp[lp.year:, l] = np.maximum(need_fp[lp.year:, l], lp.fp + 1)
        else:
            co_count[lp.slot, lp.src, lp.fp] += 1
    if count.max(initial=0) > 1 or co_count.max(initial=0) > 1:
        problems.append("double-allocated spectrum cell")
    if not np.array_equal(count > 0, state.occupancy > 0) or not np.array_equal(co_count > 0, state.colocated_occupancy > 0):
        problems.append("occupancy does not match established lightpaths")
    if np.any(np.diff(state.year_fp, axis=0) < 0):
        problems.append("fiber pairs decrease over time")
    if not np.array_equal(need_fp, state.year_fp):
        problems.append("fiber-pair ledger does not match lightpaths")
    if state.year_fp.max(initial=0) > cfg.fp_max:
        problems.append("fiber pairs exceed fp_max")
    for ledger in result.ledgers.values():
        # cumulative demand against cumulative established bitrate, per (node, kind, role)
        demand: dict[tuple, np.ndarray] = {}
        for n, y, kind, role, a, _, _ in ledger.service:
            demand.setdefault((n, kind, role), np.zeros(ledger.years))[y] += a
        built: dict[tuple, np.ndarray] = {}
        for lp in ledger.lightpaths:
            built.setdefault((lp.src, lp.kind, lp.role), np.zeros(ledger.years))[lp.year] += lp.bitrate
        for key, a in demand.items():
            have = np.cumsum(built.get(key, np.zeros(ledger.years)))
            short = np.flatnonzero(have < np.cumsum(a) - 1e-6)
            if short.size:
                n, kind, role = key
                problems.append(f"HL{ledger.level} node {n} year {short[0]} {kind}/{role} under-provisioned")
    return problems


# ------------------------------------------------------------------ archives


def _pad(rows: list[list[float]]) -> np.ndarray:
    width = max((len(r) for r in rows), default=0)
    out = np.full((len(rows), width), np.nan)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def archive_arrays(ledger: LevelLedger, topo: Topology, layout: BandLayout) -> dict[str, dict[str, np.ndarray]]:
    """The five archive groups of one level as ``{group: {key: array}}``."""
    years, L, N = ledger.years, ledger.num_links, ledger.num_nodes
    cum = ledger.license_cum.sum(axis=1)
    annual = np.diff(np.concatenate([[0], cum]))
    est = np.array(
        [
            [lp.year, lp.src, lp.dst, ROLES.index(lp.role), KINDS.index(lp.kind), lp.slot, lp.fp,
             band_index(lp.band), lp.bitrate, lp.gsnr, lp.level]
            for lp in ledger.lightpaths
        ],
        dtype=float,
    ).reshape(-1, 11)
    bvt_info = {
        "HL_All_100G_lincense": cum,
        "HL_annual_license": annual,
        "HL_CBand_license": ledger.license_cum[:, 0],
        "HL_SuperCBand_license": ledger.license_cum[:, 1],
        "HL_LBand_license": ledger.license_cum[:, 2],
        "HL_BVTNum_All": ledger.bvt_cum.sum(axis=1),
        "HL_BVTNum_CBand": ledger.bvt_cum[:, 0],
        "HL_BVTNum_SuperCBand": ledger.bvt_cum[:, 1],
        "HL_BVTNum_LBand": ledger.bvt_cum[:, 2],
        "BVT_establishment_info": est,
    }

    band_links = np.zeros((3, years, L), dtype=np.int64)
    for lp in ledger.lightpaths:
        for l in lp.links:
            band_links[band_index(lp.band) - 1, lp.year:, l] += 1
    band_degree = np.zeros((3, years, N), dtype=np.int64)
    for i, link in enumerate(topo.links):
        used = (band_links[:, :, i] > 0).astype(np.int64)
        band_degree[:, :, link.a] += used
        band_degree[:, :, link.b] += used
    link_info = {
        "HL_links_indices": np.array(ledger.subnet_links, dtype=np.int64),
        "num_link_CBand_annual": band_links[0],
        "num_link_SupCBand_annual": band_links[1],
        "num_link_LBand_annual": band_links[2],
        "HL_CDegree_Domain": band_degree[0],
        "HL_SuperCDegree_Domain": band_degree[1],
        "HL_LDegree_Domain": band_degree[2],
        "Total_effective_FP_new_annual": ledger.effective_fp_km,
        "HL_FPNum": ledger.year_fp,
        "HL_FPNumCo": ledger.year_fp_colocated,
        "degree_number_HLs": ledger.degree_number,
        "traffic_flow_links_array": ledger.traffic_flow,
    }

    gsnr = {"all": [[] for _ in range(years)], "primary": [[] for _ in range(years)], "secondary": [[] for _ in range(years)]}
    for lp in ledger.lightpaths:
        if lp.links:
            gsnr["all"][lp.year].append(lp.gsnr)
            gsnr[lp.role][lp.year].append(lp.gsnr)
    path_info = {
        "GSNR_all_paths": _pad(gsnr["all"]),
        "GSNR_primary": _pad(gsnr["primary"]),
        "GSNR_secondary": _pad(gsnr["secondary"]),
    }
    return {
        "bvt_info": bvt_info,
        "link_info": link_info,
        "path_GSNR_info": path_info,
        "node_capacity_profile_array": {"node_capacity_profile_array": ledger.node_capacity_profile},
        "segments_latency": {"latency": ledger.latency, "destinations": ledger.destinations},
    }


def archive_name(topology_name: str, level: int, group: str) -> str:
    return f"{topology_name}_HL{level}_{group}.npz"


def save_results(
    ledger: LevelLedger, topo: Topology, layout: BandLayout, results_dir: str | Path, create: bool = True
) -> list[Path]:
    results_dir = Path(results_dir)
    if not results_dir.is_dir():
        if not create:
            raise FileNotFoundError(f"results directory {results_dir} does not exist")
        results_dir.mkdir(parents=True)
    written = []
    for group, arrays in archive_arrays(ledger, topo, layout).items():
        written.append(save_npz(results_dir / archive_name(topo.name, ledger.level, group), arrays))
    return written
