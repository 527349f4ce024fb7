"""Post-processing of plan archives: optical cost, IP routers, energy,
end-to-end latency and report tables."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._npz import load_npz, save_npz
from .planner import ARCHIVE_GROUPS, archive_name

HOURS_PER_YEAR = 8760.0
RUN_FILE = "run.json"


class AnalysisError(ValueError):
    pass


class LatencyError(AnalysisError):
    pass


# ----------------------------------------------------------------- loading


@dataclass
class ResultSet:
    topology: str
    levels: list[int]
    bvt_data: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    link_data: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    gsnr_data: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    capacity: dict[int, np.ndarray] = field(default_factory=dict)
    latency: dict[int, np.ndarray] = field(default_factory=dict)
    destinations: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def years(self) -> int:
        if not self.levels:
            return 0
        return int(self.bvt_data[self.levels[0]]["HL_BVTNum_All"].shape[0])


def read_run_info(results_dir: str | Path) -> dict:
    path = Path(results_dir) / RUN_FILE
    if not path.exists():
        raise FileNotFoundError(f"missing run description {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_results(results_dir: str | Path, levels: Sequence[int], topology: str | None = None) -> ResultSet:
    results_dir = Path(results_dir)
    if topology is None:
        topology = read_run_info(results_dir)["topology"] if levels else ""
    out = ResultSet(topology, list(levels))
    for level in levels:
        groups = {}
        for group in ARCHIVE_GROUPS:
            path = results_dir / archive_name(topology, level, group)
            if not path.exists():
                raise FileNotFoundError(f"missing result archive {path}")
            groups[group] = load_npz(path)
        out.bvt_data[level] = groups["bvt_info"]
        out.link_data[level] = groups["link_info"]
        out.gsnr_data[level] = groups["path_GSNR_info"]
        out.capacity[level] = groups["node_capacity_profile_array"]["node_capacity_profile_array"]
        out.latency[level] = groups["segments_latency"]["latency"]
        out.destinations[level] = groups["segments_latency"]["destinations"]
    return out


# ----------------------------------------------------------------- books


@dataclass(frozen=True)
class CostBook:
    c_100g_first: float = 1.0
    c_100g_added: float = 0.333
    c_mcs: float = 0.7
    c_rob: float = 1.9
    c_iru: float = 0.5
    ip_router_costs: tuple[tuple[int, float], ...] = (
        (400, 1.6), (800, 3.2), (1600, 6.4), (3200, 12.8), (6400, 25.6), (12800, 51.2), (25600, 102.4),
    )
    band_alpha: tuple[tuple[str, float], ...] = (("SuperC", 0.1), ("L", 0.2))
    depreciation_gamma: float = 0.1
    mcs_ports: int = 16
    utilization: float = 1.0

    def __post_init__(self):
        scalars = (self.c_100g_first, self.c_100g_added, self.c_mcs, self.c_rob, self.c_iru)
        if min(scalars) < 0:
            raise AnalysisError("costs must be >= 0")
        caps = [c for c, _ in self.ip_router_costs]
        costs = [v for _, v in self.ip_router_costs]
        if any(b <= a for a, b in zip(caps, caps[1:])) or any(b <= a for a, b in zip(costs, costs[1:])):
            raise AnalysisError("router classes must increase in capacity and cost")

    def band_factor(self, band: str, year: int) -> float:
        """Equipment price factor for ``band`` in planning year ``year`` (1-based)."""
        alpha = dict(self.band_alpha).get(band, 0.0)
        return 1.0 + alpha * (1.0 - self.depreciation_gamma) ** year


@dataclass(frozen=True)
class PowerBook:
    bvt_watt: float = 160.0
    ip_router_watt: tuple[tuple[int, float], ...] = (
        (400, 2000), (800, 2500), (1600, 3100), (3200, 3900), (6400, 4900), (12800, 6100), (25600, 7600),
    )

    def __post_init__(self):
        if self.bvt_watt <= 0 or any(w <= 0 for _, w in self.ip_router_watt):
            raise AnalysisError("power values must be > 0")


# ------------------------------------------------------------------ cost


@dataclass
class CostReport:
    opex: np.ndarray
    mcs: np.ndarray
    rob: np.ndarray
    license: np.ndarray  # unadjusted 100G cost
    license_adjusted: np.ndarray  # with band factors
    capex: np.ndarray  # mcs + rob + adjusted 100G
    otco: np.ndarray
    ip_capex: np.ndarray
    tco: np.ndarray

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["opex", "mcs", "rob", "license", "license_adjusted", "capex", "otco", "ip_capex", "tco"]
        return cols, np.column_stack([getattr(self, c) for c in cols])


def global_year_fp(results: ResultSet) -> np.ndarray:
    return np.max(np.stack([results.link_data[l]["HL_FPNum"] for l in results.levels]), axis=0)


def establishment_rows(results: ResultSet) -> np.ndarray:
    rows = [results.bvt_data[l]["BVT_establishment_info"] for l in results.levels]
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, 11))


def fp_incidence_from_links(links: Sequence[tuple[int, int, float]], num_nodes: int, year_fp: np.ndarray) -> np.ndarray:
    out = np.zeros((year_fp.shape[0], num_nodes), dtype=year_fp.dtype)
    for i, (a, b, _) in enumerate(links):
        out[:, a] += year_fp[:, i]
        out[:, b] += year_fp[:, i]
    return out


def band_totals(results: ResultSet, prefix: str) -> np.ndarray:
    """Cumulative [year, band] totals summed over levels."""
    names = {"bvt": ("HL_BVTNum_CBand", "HL_BVTNum_SuperCBand", "HL_BVTNum_LBand"),
             "license": ("HL_CBand_license", "HL_SuperCBand_license", "HL_LBand_license")}[prefix]
    return np.column_stack([sum(results.bvt_data[l][k] for l in results.levels) for k in names]).astype(float)


def optical_cost(
    results: ResultSet,
    links: Sequence[tuple[int, int, float]],
    num_nodes: int,
    book: CostBook = CostBook(),
    ip_capex: np.ndarray | None = None,
) -> CostReport:
    years = results.years
    lengths = np.array([km for _, _, km in links], dtype=float)
    year_fp = global_year_fp(results)
    if np.any(year_fp < 0):
        raise AnalysisError("negative fiber-pair entries")
    opex = 2 * book.c_iru * book.utilization * (year_fp @ lengths)

    ports = np.zeros((years, num_nodes))
    for row in establishment_rows(results):
        y, src, dst = int(row[0]), int(row[1]), int(row[2])
        ports[y, src] += 1
        ports[y, dst] += 1
    mcs = book.c_mcs * np.ceil(ports / book.mcs_ports).sum(axis=1)

    inc = fp_incidence_from_links(links, num_nodes, year_fp)
    new_deg = np.diff(np.vstack([np.zeros((1, num_nodes)), inc]), axis=0)
    rob = book.c_rob * new_deg.sum(axis=1)

    bvt = band_totals(results, "bvt")
    lic = band_totals(results, "license")
    new_bvt = np.diff(np.vstack([np.zeros((1, 3)), bvt]), axis=0)
    new_lic = np.diff(np.vstack([np.zeros((1, 3)), lic]), axis=0)
    if np.any(new_bvt < 0) or np.any(new_lic < new_bvt):
        raise AnalysisError("inconsistent BVT/license ledger")
    per_band = book.c_100g_first * new_bvt + book.c_100g_added * (new_lic - new_bvt)
    factors = np.array([[book.band_factor(b, y + 1) for b in ("C", "SuperC", "L")] for y in range(years)])
    license_cost = per_band.sum(axis=1)
    license_adj = (per_band * factors).sum(axis=1)

    capex = mcs + rob + license_adj
    otco = np.cumsum(capex + opex)
    ip = np.zeros(years) if ip_capex is None else np.asarray(ip_capex, dtype=float)
    tco = otco + np.cumsum(ip)
    return CostReport(opex, mcs, rob, license_cost, license_adj, capex, otco, ip, tco)


# ------------------------------------------------------------------ routers


@dataclass
class RouterFleet:
    base_class: np.ndarray  # [node] Gbps, 0 = no router
    counts: np.ndarray  # [year, node]
    capex: np.ndarray  # [year]
    demand: np.ndarray  # [year, node] cumulative Gbps


def router_demand(results: ResultSet) -> np.ndarray:
    """Cumulative traffic aggregated at each node, [year, node]."""
    added = sum(results.capacity[l] for l in results.levels)
    return np.cumsum(added, axis=0)


def size_ip_routers(demand: np.ndarray, book: CostBook = CostBook(), base_year: int = 5) -> RouterFleet:
    """Pick each node's router class from its demand in ``base_year`` (1-based)
    and add routers of that class whenever demand outgrows the fleet."""
    demand = np.asarray(demand, dtype=float)
    if demand.ndim != 2 or demand.shape[0] == 0:
        raise AnalysisError("empty demand profile")
    years, nodes = demand.shape
    classes = np.array([c for c, _ in book.ip_router_costs], dtype=float)
    prices = dict(book.ip_router_costs)
    by = min(base_year, years) - 1
    base = np.zeros(nodes)
    counts = np.zeros((years, nodes), dtype=np.int64)
    capex = np.zeros(years)
    for n in range(nodes):
        positive = np.flatnonzero(demand[:, n] > 0)
        if positive.size == 0:
            continue
        ref = demand[by, n] if demand[by, n] > 0 else demand[positive[0], n]
        idx = np.searchsorted(classes, ref - 1e-9)
        base[n] = classes[min(idx, classes.size - 1)]
        prev = 0
        for y in range(years):
            need = int(math.ceil(demand[y, n] / base[n] - 1e-9)) if demand[y, n] > 0 else 0
            counts[y, n] = max(prev, need)
            capex[y] += (counts[y, n] - prev) * prices[int(base[n])]
            prev = counts[y, n]
    return RouterFleet(base, counts, capex, demand)


# ------------------------------------------------------------------ energy


@dataclass
class EnergyReport:
    optical_mwh: np.ndarray
    electrical_mwh: np.ndarray
    total_mwh: np.ndarray
    cumulative_mwh: np.ndarray
    traffic_gbps: np.ndarray
    normalized_mwh_per_100g: np.ndarray

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["optical_mwh", "electrical_mwh", "total_mwh", "cumulative_mwh", "traffic_gbps", "normalized_mwh_per_100g"]
        return cols, np.column_stack([getattr(self, c) for c in cols])


def energy_report(
    active_bvts: np.ndarray,
    fleet: RouterFleet | None,
    power: PowerBook = PowerBook(),
    traffic_gbps: np.ndarray | None = None,
    hours_per_year: float = HOURS_PER_YEAR,
) -> EnergyReport:
    active_bvts = np.asarray(active_bvts, dtype=float)
    years = active_bvts.shape[0]
    optical = active_bvts * power.bvt_watt * hours_per_year / 1e6
    electrical = np.zeros(years)
    if fleet is not None:
        if fleet.counts.shape[0] != years:
            raise AnalysisError("router fleet and BVT ledger cover different years")
        watts = dict(power.ip_router_watt)
        for n in np.flatnonzero(fleet.base_class > 0):
            electrical += fleet.counts[:, n] * watts[int(fleet.base_class[n])] * hours_per_year / 1e6
    total = optical + electrical
    traffic = np.zeros(years) if traffic_gbps is None else np.asarray(traffic_gbps, dtype=float)
    if traffic.shape[0] != years:
        raise AnalysisError("traffic and BVT ledger cover different years")
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(traffic > 0, total / (traffic / 100.0), 0.0)
    return EnergyReport(optical, electrical, total, np.cumsum(total), traffic, normalized)


# ----------------------------------------------------------------- latency


def e2e_latency_paths(
    node: int,
    latency_table: Mapping[int, np.ndarray],
    destination_table: Mapping[int, np.ndarray],
    levels: Sequence[int],
) -> list[tuple[tuple[int, ...], float]]:
    """Every dual-homed route from ``node`` up through ``levels`` (low to high)
    with its summed propagation latency in microseconds."""
    if len(set(levels)) != len(levels):
        # each step moves one level up, so a repeated level is the only way to loop
        raise LatencyError(f"cycle: level list {list(levels)} repeats a level")
    out: list[tuple[tuple[int, ...], float]] = []

    def walk(stage: int, n: int, trail: tuple[int, ...], acc: float):
        level = levels[stage]
        lat = latency_table[level]
        dst = destination_table[level]
        if not 0 <= n < dst.shape[0] or np.all(dst[n] < 0):
            raise LatencyError(f"no latency row for node {n} at HL{level}")
        for j in range(dst.shape[1]):
            d = int(dst[n, j])
            if d < 0:
                continue
            total = acc + float(lat[n, j])
            if stage + 1 == len(levels):
                out.append((trail + (d,), total))
            else:
                walk(stage + 1, d, trail + (d,), total)

    walk(0, node, (node,), 0.0)
    return out


def latency_sources(destination_table: Mapping[int, np.ndarray], levels: Sequence[int]) -> list[int]:
    dst = destination_table[levels[0]]
    return [int(n) for n in range(dst.shape[0]) if np.any(dst[n] >= 0)]


def e2e_latency_total(
    latency_table: Mapping[int, np.ndarray],
    destination_table: Mapping[int, np.ndarray],
    levels: Sequence[int],
    per_level_delay: float = 200.0,
    include_final: bool = False,
    sources: Sequence[int] | None = None,
    save_path: str | Path | None = None,
) -> np.ndarray:
    """Propagation plus aggregation delay of every end-to-end route.

    The aggregation delay applies once per intermediate level, and once more
    at the final termination when ``include_final`` is set.
    """
    if not levels:
        return np.zeros(0)
    stages = len(levels) - 1 + (1 if include_final else 0)
    if sources is None:
        sources = latency_sources(destination_table, levels)
    totals = []
    for n in sources:
        for _, prop in e2e_latency_paths(n, latency_table, destination_table, levels):
            totals.append(prop + per_level_delay * stages)
    arr = np.array(totals, dtype=float)
    if save_path is not None:
        save_npz(save_path, {"latency": arr})
    return arr


# ------------------------------------------------------------------ bundle


@dataclass
class Analysis:
    results: ResultSet
    run: dict
    cost: CostReport
    fleet: RouterFleet
    energy: EnergyReport
    latencies: np.ndarray

    @property
    def total_bvts(self) -> np.ndarray:
        return band_totals(self.results, "bvt").sum(axis=1)

    @property
    def total_licenses(self) -> np.ndarray:
        return band_totals(self.results, "license").sum(axis=1)

    @property
    def year_fp(self) -> np.ndarray:
        return global_year_fp(self.results)

    @property
    def effective_fp_km(self) -> np.ndarray:
        lengths = np.array([km for _, _, km in self.run["links"]], dtype=float)
        return self.year_fp @ lengths

    def summary(self) -> dict[str, float]:
        """Headline end-of-period metrics."""
        return {
            "fp_count": float(self.year_fp[-1].sum()),
            "fp_km": float(self.effective_fp_km[-1]),
            "bvts": float(self.total_bvts[-1]),
            "licenses": float(self.total_licenses[-1]),
            "otco": float(self.cost.otco[-1]),
            "ip_cost": float(self.cost.ip_capex.sum()),
            "tco": float(self.cost.tco[-1]),
            "energy_mwh": float(self.energy.cumulative_mwh[-1]),
            "mean_latency_us": float(self.latencies.mean()) if self.latencies.size else 0.0,
        }


def analyze(results_dir: str | Path) -> Analysis:
    run = read_run_info(results_dir)
    levels = run["levels"]
    results = load_results(results_dir, levels, run["topology"])
    cost_book = CostBook(**_books(run.get("cost_book", {})))
    power_book = PowerBook(**_books(run.get("power_book", {})))
    demand = router_demand(results)
    fleet = size_ip_routers(demand, cost_book, run.get("router_base_year", 5))
    cost = optical_cost(results, run["links"], run["num_nodes"], cost_book, fleet.capex)
    traffic = np.cumsum(results.capacity[levels[0]], axis=0).sum(axis=1)
    energy = energy_report(band_totals(results, "bvt").sum(axis=1), fleet, power_book, traffic)
    latencies = e2e_latency_total(
        results.latency, results.destinations, levels,
        run.get("per_level_delay_us", 200.0), run.get("include_final_delay", False),
    )
    return Analysis(results, run, cost, fleet, energy, latencies)


def _books(d: Mapping) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, Mapping):
            items = [(int(a) if str(a).isdigit() else str(a), float(b)) for a, b in v.items()]
            out[k] = tuple(sorted(items, key=lambda kv: (isinstance(kv[0], str), kv[0])))
        else:
            out[k] = v
    return out


def book_to_json(book) -> dict:
    out = {}
    for k, v in asdict(book).items():
        out[k] = {str(a): b for a, b in v} if isinstance(v, tuple) else v
    return out


# ----------------------------------------------------------------- reports


REPORT_KINDS = ("link_state", "fp_usage", "band_degree", "bvt_license", "cost", "energy", "latency_pdf", "traffic_flow")


def _report_table(kind: str, a: Analysis) -> tuple[str, list[str], np.ndarray]:
    r = a.results
    years = np.arange(1, r.years + 1)
    n_links = len(a.run["links"])
    if kind == "link_state":
        occ = np.zeros((r.years, n_links))
        for l in r.levels:
            d = r.link_data[l]
            occ += d["num_link_CBand_annual"] + d["num_link_SupCBand_annual"] + d["num_link_LBand_annual"]
        return "Link_State", ["year"] + [f"link_{i}" for i in range(n_links)], np.column_stack([years, occ])
    if kind == "fp_usage":
        return "FP_Usage", ["year", "fp_count", "fp_km"], np.column_stack([years, a.year_fp.sum(axis=1), a.effective_fp_km])
    if kind == "band_degree":
        cols = []
        for key in ("HL_CDegree_Domain", "HL_SuperCDegree_Domain", "HL_LDegree_Domain"):
            cols.append(sum(r.link_data[l][key] for l in r.levels).sum(axis=1))
        return "FP_Degree", ["year", "C", "SuperC", "L"], np.column_stack([years] + cols)
    if kind == "bvt_license":
        bvt, lic = band_totals(r, "bvt"), band_totals(r, "license")
        return (
            "BVT_License",
            ["year", "bvt_C", "bvt_SuperC", "bvt_L", "bvt_all", "license_C", "license_SuperC", "license_L", "license_all"],
            np.column_stack([years, bvt, bvt.sum(axis=1), lic, lic.sum(axis=1)]),
        )
    if kind == "cost":
        cols, data = a.cost.table()
        return "cost_analyse", ["year"] + cols, np.column_stack([years, data])
    if kind == "energy":
        cols, data = a.energy.table()
        return "Energy", ["year"] + cols, np.column_stack([years, data])
    if kind == "latency_pdf":
        lat = a.latencies
        if lat.size == 0:
            return "Latency_PDF", ["bin_low_us", "bin_high_us", "probability"], np.zeros((0, 3))
        hist, edges = np.histogram(lat, bins=20)
        return "Latency_PDF", ["bin_low_us", "bin_high_us", "probability"], np.column_stack([edges[:-1], edges[1:], hist / lat.size])
    if kind == "traffic_flow":
        flow = sum(r.link_data[l]["traffic_flow_links_array"] for l in r.levels)
        return "Traffic_Flow", ["year"] + [f"link_{i}" for i in range(n_links)], np.column_stack([years, flow])
    raise AnalysisError(f"unknown report kind {kind!r}")


def emit_report(kind: str, analysis: Analysis, out_dir: str | Path, suffix: str = "", svg: bool = False) -> list[Path]:
    """Write one report as CSV (and optionally a line-chart SVG)."""
    if kind not in REPORT_KINDS:
        raise AnalysisError(f"unknown report kind {kind!r}")
    label, header, data = _report_table(kind, analysis)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{analysis.results.topology}_{label}{suffix}"
    path = out_dir / f"{stem}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([_fmt(v) for v in row])
    written = [path]
    if svg:
        svg_path = out_dir / f"{stem}.svg"
        svg_path.write_text(_line_svg(header, data, stem), encoding="utf-8")
        written.append(svg_path)
    return written


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _line_svg(header: list[str], data: np.ndarray, title: str, width: int = 640, height: int = 360) -> str:
    pad = 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{pad}" y="20" font-size="14">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
    ]
    if data.size and data.shape[0] > 0:
        x = data[:, 0]
        ys = data[:, 1:]
        xr = (x.max() - x.min()) or 1.0
        ymin, ymax = float(np.nanmin(ys)), float(np.nanmax(ys))
        yr = (ymax - ymin) or 1.0
        palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
        for j in range(min(ys.shape[1], 12)):
            pts = " ".join(
                f"{pad + (xi - x.min()) / xr * (width - 2 * pad):.1f},{height - pad - (yi - ymin) / yr * (height - 2 * pad):.1f}"
                for xi, yi in zip(x, ys[:, j])
            )
            parts.append(f'<polyline fill="none" stroke="{palette[j % len(palette)]}" points="{pts}"><title>{header[j + 1]}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ----------------------------------------------------------------- compare


COMPARE_METRICS = ("fp_count", "fp_km", "bvts", "licenses", "otco", "ip_cost", "tco", "energy_mwh", "mean_latency_us")


def relative_difference(value: float, reference: float) -> float:
    """``(value - reference) / reference * 100``; 0 when both are 0."""
    if reference == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return (value - reference) / reference * 100.0


def compare_runs(dir_a: str | Path, dir_b: str | Path) -> list[tuple[str, float, float, float]]:
    """Rows of ``(metric, value_a, value_b, relative difference of b against a)``."""
    run_a, run_b = read_run_info(dir_a), read_run_info(dir_b)
    if run_a["topology"] != run_b["topology"]:
        raise AnalysisError(f"topology mismatch: {run_a['topology']} vs {run_b['topology']}")
    if run_a["seed"] != run_b["seed"]:
        raise AnalysisError(f"seed mismatch: {run_a['seed']} vs {run_b['seed']}")
    sa, sb = analyze(dir_a).summary(), analyze(dir_b).summary()
    return [(m, sa[m], sb[m], relative_difference(sb[m], sa[m])) for m in COMPARE_METRICS]
