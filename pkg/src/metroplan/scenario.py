"""Scenario files: parsing, validation and end-to-end plan execution."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analysis import RUN_FILE, CostBook, PowerBook, book_to_json
from .planner import (
    PlanContext,
    PlannerConfig,
    PlanResult,
    generate_initial_traffic,
    make_traffic_profile,
    plan_network,
    save_results,
)
from .qot import FilterPenaltyTable, QoTPenalties, cached_link_gsnr_profile, make_span_plan
from .spectrum import Band, Modulation, OpticalParameters, SpectrumPlan
from .topology import HierarchyMap, Topology, define_hierarchy, load_topology

NLI_MODEL = "closed-form ISRS-GN, SPM+XPM, Gaussian modulation, incoherent span accumulation"


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    seed: int
    topology: Topology
    hierarchy: HierarchyMap
    levels: list[int]
    bypass_levels: list[int]
    bypass_nodes: frozenset[int]
    planner: PlannerConfig
    spectrum: SpectrumPlan
    optical: OpticalParameters
    penalties: QoTPenalties
    filter_table: FilterPenaltyTable
    candidate_powers_dbm: np.ndarray
    max_span_km: float
    nli: bool
    isrs: bool
    traffic: dict
    cost_book: CostBook
    power_book: PowerBook
    results_dir: Path
    per_level_delay_us: float = 200.0
    include_final_delay: bool = False
    router_base_year: int = 5
    qot_cache: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def mode(self) -> str:
        return "bypass" if self.bypass_levels else "full_hierarchical"


def _db_to_lin(db: float) -> float:
    return 10 ** (db / 10)


def apply_bypass(assignments: Mapping[int, dict], bypass_levels: list[int]) -> tuple[dict[int, dict], set[int]]:
    """Fold each bypassed level's standalone nodes into the next lower level
    and drop the bypassed level; the moved nodes carry no traffic."""
    levels = sorted(assignments)
    out = {lvl: {"standalone": list(spec.get("standalone") or []), "colocated": spec.get("colocated")}
           for lvl, spec in assignments.items()}
    moved: set[int] = set()
    for b in sorted(bypass_levels, reverse=True):
        lower = [l for l in levels if l > b and l in out]
        if b not in out or not lower or b == min(levels):
            raise ScenarioError(f"HL{b} cannot be bypassed")
        nodes = out.pop(b)["standalone"]
        out[min(lower)]["standalone"] = sorted(set(out[min(lower)]["standalone"]) | set(nodes))
        moved |= set(nodes)
    for spec in out.values():
        if spec["colocated"] is not None:
            spec["colocated"] = sorted(set(spec["colocated"]) - moved)
    return out, moved


def load_scenario(path: str | Path, out_dir: str | Path | None = None) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")
    return build_scenario(raw, base_dir=path.parent, out_dir=out_dir)


def build_scenario(raw: dict, base_dir: Path = Path("."), out_dir: str | Path | None = None) -> Scenario:
    try:
        return _build(raw, Path(base_dir), out_dir)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"invalid scenario: {exc!r}") from exc


def _build(raw: dict, base_dir: Path, out_dir) -> Scenario:
    if "seed" not in raw:
        raise ScenarioError("scenario must define a seed")
    seed = int(raw["seed"])
    topo_spec = raw["topology"]
    source = Path(topo_spec["source"])
    if not source.is_absolute():
        source = base_dir / source
    if not source.exists():
        raise FileNotFoundError(f"topology file {source} not found")
    topology = load_topology(source, topo_spec.get("format"), topo_spec.get("name"))

    assignments = {int(k): dict(v or {}) for k, v in raw["hierarchy"].items()}
    define_hierarchy(topology, assignments)  # validate before any transformation

    mode = raw.get("mode", "full_hierarchical")
    if mode == "full_hierarchical" or mode is None:
        bypass_levels: list[int] = []
    elif isinstance(mode, Mapping) and "bypass" in mode:
        bypass_levels = [int(b) for b in mode["bypass"]]
    else:
        raise ScenarioError(f"unknown mode {mode!r}")

    default_levels = sorted((l for l in assignments if l != min(assignments)), reverse=True)
    levels = [int(l) for l in raw.get("levels", default_levels)]
    for b in bypass_levels:
        if b not in assignments:
            raise ScenarioError(f"bypassed level HL{b} is not in the hierarchy")
        if b not in levels or b == levels[0]:
            raise ScenarioError(f"HL{b} is not an intermediate planning level")
    assignments, moved = apply_bypass(assignments, bypass_levels)
    hierarchy = define_hierarchy(topology, assignments)
    levels = [l for l in levels if l not in bypass_levels]

    sp_raw = raw.get("spectrum", {})
    if "bands" in sp_raw:
        bands = tuple(Band(b["name"], float(b["start"]), float(b["end"]), float(b["spacing"])) for b in sp_raw["bands"])
        spectrum = SpectrumPlan(bands)
    else:
        spectrum = SpectrumPlan()

    opt_raw = dict(raw.get("optical", {}))
    mods = opt_raw.pop("modulations", None)
    nf_c = opt_raw.pop("noise_figure_C_db", 5.0)
    nf_l = opt_raw.pop("noise_figure_L_db", 6.0)
    optical = OpticalParameters(
        noise_figure_C=_db_to_lin(nf_c),
        noise_figure_L=_db_to_lin(nf_l),
        modulations=tuple(Modulation(m[0], float(m[1]), float(m[2])) for m in mods) if mods else OpticalParameters().modulations,
        **{k: float(v) for k, v in opt_raw.items()},
    )

    pl = dict(raw.get("planner", {}))
    for key in ("bvt_bitrates", "license_capacities"):
        if key in pl:
            pl[key] = tuple(float(x) for x in pl[key])
    planner = PlannerConfig(band_layout=spectrum.layout, **pl)

    q = raw.get("qot", {})
    powers = q.get("candidate_powers_dbm", [round(x, 2) for x in np.arange(-3.0, 5.01, 0.5)])
    table = FilterPenaltyTable(
        tuple(tuple(float(v) if v != "inf" else math.inf for v in row) for row in q["filter_penalty"])
    ) if "filter_penalty" in q else FilterPenaltyTable()
    trx = q.get("trx_snr_db", 36.0)
    penalties = QoTPenalties(None if trx is None else float(trx), 0.0, float(q.get("aging_margin_db", 1.0)))

    traffic = {"min_rate": 20.0, "max_rate": 200.0, "mc_steps": 100, **raw.get("traffic", {})}
    if "cagr" in traffic:
        raise ScenarioError("set cagr under planner, not traffic")

    results_dir = Path(out_dir) if out_dir is not None else base_dir / raw.get("results_dir", "results")
    lat = raw.get("latency", {})
    return Scenario(
        name=str(raw.get("name", topology.name)),
        seed=seed,
        topology=topology,
        hierarchy=hierarchy,
        levels=levels,
        bypass_levels=bypass_levels,
        bypass_nodes=frozenset(moved),
        planner=planner,
        spectrum=spectrum,
        optical=optical,
        penalties=penalties,
        filter_table=table,
        candidate_powers_dbm=np.asarray(powers, dtype=float),
        max_span_km=float(q.get("max_span_km", 80.0)),
        nli=bool(q.get("nli", True)),
        isrs=bool(q.get("isrs", True)),
        traffic=traffic,
        cost_book=CostBook(**_pairs(raw.get("costs", {}))),
        power_book=PowerBook(**_pairs(raw.get("power", {}))),
        results_dir=results_dir,
        per_level_delay_us=float(lat.get("per_level_delay_us", 200.0)),
        include_final_delay=bool(lat.get("include_final", False)),
        router_base_year=int(raw.get("router_base_year", 5)),
        qot_cache=bool(q.get("cache", False)),
        raw=raw,
    )


def _pairs(d: Mapping) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, Mapping):
            items = [(int(a) if str(a).isdigit() else str(a), float(b)) for a, b in v.items()]
            out[k] = tuple(sorted(items, key=lambda kv: (isinstance(kv[0], str), kv[0])))
        else:
            out[k] = v
    return out


def run_scenario(sc: Scenario, echo=None) -> PlanResult:
    """Compute QoT, plan every level, write archives and the run description."""
    topo = sc.topology
    spans = make_span_plan(topo.link_lengths, sc.max_span_km)
    cache_dir = sc.results_dir / "cache" if sc.qot_cache else None
    profile = cached_link_gsnr_profile(
        cache_dir, [topo.name],
        grid_thz=sc.spectrum.grid_thz, candidate_powers_dbm=sc.candidate_powers_dbm, spans=spans,
        params=sc.optical, layout=sc.spectrum.layout, nli=sc.nli, isrs=sc.isrs,
    )
    t = sc.traffic
    base = generate_initial_traffic(
        topo.num_nodes, sc.bypass_nodes, int(t["mc_steps"]), float(t["min_rate"]), float(t["max_rate"]), sc.seed
    )
    traffic = make_traffic_profile(base, sc.planner.cagr, sc.planner.period_years, sc.bypass_nodes)
    ctx = PlanContext(
        topo, sc.hierarchy, sc.planner, profile.gsnr_db, sc.optical, sc.penalties, sc.filter_table, sc.bypass_nodes
    )
    result = plan_network(ctx, sc.levels, traffic)

    sc.results_dir.mkdir(parents=True, exist_ok=True)
    for level in sc.levels:
        save_results(result.ledgers[level], topo, sc.spectrum.layout, sc.results_dir)
    (sc.results_dir / RUN_FILE).write_text(json.dumps(run_info(sc), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    if echo is not None:
        lengths = topo.link_lengths
        for y in range(sc.planner.period_years):
            bvts = sum(int(result.ledgers[l].bvt_cum[y].sum()) for l in sc.levels)
            lic = sum(int(result.ledgers[l].license_cum[y].sum()) for l in sc.levels)
            fpkm = float(result.state.year_fp[y] @ lengths)
            echo(f"year {y + 1}: BVTs {bvts}, 100G licenses {lic}, FP-km {fpkm:.1f}")
    return result


def run_info(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "topology": sc.topology.name,
        "seed": sc.seed,
        "mode": sc.mode,
        "bypass_levels": sc.bypass_levels,
        "bypass_nodes": sorted(sc.bypass_nodes),
        "levels": sc.levels,
        "years": sc.planner.period_years,
        "num_nodes": sc.topology.num_nodes,
        "links": [[l.a, l.b, l.km] for l in sc.topology.links],
        "cost_book": book_to_json(sc.cost_book),
        "power_book": book_to_json(sc.power_book),
        "per_level_delay_us": sc.per_level_delay_us,
        "include_final_delay": sc.include_final_delay,
        "router_base_year": sc.router_base_year,
        "nli_model": NLI_MODEL if sc.nli else "disabled",
        "isrs": sc.isrs,
    }
