from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from metroplan.analysis import analyze
from metroplan.scenario import load_scenario, run_scenario

HERE = Path(__file__).parent
GOLDEN = HERE / "data" / "golden"
sys.path.insert(0, str(HERE))


def random_connected_matrix(rng: np.random.Generator, n: int, extra: float = 0.35, wmax: int = 9) -> np.ndarray:
    """Symmetric integer-weighted cost matrix of a connected graph (inf = absent)."""
    m = np.full((n, n), np.inf)
    np.fill_diagonal(m, 0.0)
    order = rng.permutation(n)
    for i in range(1, n):  # random spanning tree
        a, b = order[i], order[rng.integers(0, i)]
        m[a, b] = m[b, a] = rng.integers(1, wmax + 1)
    for a in range(n):
        for b in range(a + 1, n):
            if np.isinf(m[a, b]) and rng.random() < extra:
                m[a, b] = m[b, a] = rng.integers(1, wmax + 1)
    return m


def run_golden(name: str, out: Path):
    sc = load_scenario(GOLDEN / name, out)
    result = run_scenario(sc)
    return sc, result, analyze(out)


@pytest.fixture(scope="session")
def golden_full(tmp_path_factory):
    return run_golden("scenario_full.yaml", tmp_path_factory.mktemp("golden_full"))


@pytest.fixture(scope="session")
def golden_bypass(tmp_path_factory):
    return run_golden("scenario_bypass.yaml", tmp_path_factory.mktemp("golden_bypass"))


def random_plan_inputs(seed: int, years: int = 3):
    """A random 8-16 node metro hierarchy that always admits dual homing.

    HL1 = {0, 1}; every HL2 node links to both HL1 nodes; every HL3 node links
    to two distinct HL2 nodes; a few extra random links are added. The link
    GSNR is drawn at random so that several BVT bitrates occur, and a small
    16-slot grid forces the planner into higher fiber-pair tiers.
    """
    from metroplan.planner import PlanContext, PlannerConfig, make_traffic_profile
    from metroplan.spectrum import BandLayout, OpticalParameters
    from metroplan.topology import define_hierarchy, topology_from_links

    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 17))
    n2 = int(rng.integers(2, 4))
    hl2 = list(range(2, 2 + n2))
    hl3 = list(range(2 + n2, n))
    edges = {(0, 1): 20.0}
    for v in hl2:
        edges[(0, v)] = edges[(1, v)] = float(rng.integers(5, 20))
    for v in hl3:
        for a in rng.choice(hl2, size=2, replace=False):
            edges[(min(a, v), max(a, v))] = float(rng.integers(5, 20))
    for _ in range(int(rng.integers(0, n))):  # longer extra links keep the homing links shortest
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        edges.setdefault((min(a, b), max(a, b)), float(rng.integers(40, 80)))
    links = [(a, b, km) for (a, b), km in sorted(edges.items())]
    topo = topology_from_links(n, links, f"rand{seed}")
    h = define_hierarchy(topo, {1: {"standalone": [0, 1]}, 2: {"standalone": hl2}, 3: {"standalone": hl3}})
    layout = BandLayout((8, 12), 16)
    cfg = PlannerConfig(period_years=years, band_layout=layout, fp_max=20, k_paths=2,
                        kpair_standalone=3, kpair_colocated=2, cagr=float(rng.uniform(0.1, 0.6)))
    gsnr = rng.uniform(12.0, 30.0, size=(topo.num_links, layout.total_slots))
    ctx = PlanContext(topo, h, cfg, gsnr, OpticalParameters())
    base = rng.uniform(20.0, 1200.0, size=n)
    return ctx, [3, 2], make_traffic_profile(base, cfg.cagr, years)
