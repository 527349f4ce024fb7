from __future__ import annotations

import itertools
import json
import shutil
from itertools import accumulate

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN
from metroplan.analysis import (
    REPORT_KINDS,
    AnalysisError,
    CostBook,
    LatencyError,
    PowerBook,
    ResultSet,
    RouterFleet,
    compare_runs,
    e2e_latency_paths,
    e2e_latency_total,
    emit_report,
    energy_report,
    load_results,
    optical_cost,
    relative_difference,
    router_demand,
    size_ip_routers,
)


def synthetic_results(bvt, lic, year_fp, rows=(), capacity=None) -> ResultSet:
    """A one-level result set from per-band cumulative counts."""
    bvt, lic = np.asarray(bvt, dtype=float), np.asarray(lic, dtype=float)
    years = bvt.shape[0]
    year_fp = np.asarray(year_fp)
    r = ResultSet("syn", [3])
    r.bvt_data[3] = {
        "HL_BVTNum_All": bvt.sum(axis=1),
        "HL_BVTNum_CBand": bvt[:, 0], "HL_BVTNum_SuperCBand": bvt[:, 1], "HL_BVTNum_LBand": bvt[:, 2],
        "HL_CBand_license": lic[:, 0], "HL_SuperCBand_license": lic[:, 1], "HL_LBand_license": lic[:, 2],
        "BVT_establishment_info": np.array(rows, dtype=float).reshape(-1, 11),
    }
    r.link_data[3] = {"HL_FPNum": year_fp}
    r.capacity[3] = np.zeros((years, 2)) if capacity is None else np.asarray(capacity, dtype=float)
    return r


# -------------------------------------------------------------------- cost


def test_fully_used_400g_bvt_license_cost():
    r = synthetic_results([[1, 0, 0]], [[4, 0, 0]], [[0]])
    cost = optical_cost(r, [(0, 1, 10.0)], 2)
    assert abs(cost.license[0] - 1.999) <= 1e-3
    assert cost.license[0] == pytest.approx(1 + 3 * 0.333, abs=1e-12)


def test_opex_single_link():
    r = synthetic_results([[0, 0, 0]], [[0, 0, 0]], [[1]])
    cost = optical_cost(r, [(0, 1, 10.0)], 2)
    assert cost.opex[0] == 10.0


def test_superc_year_one_factor():
    book = CostBook()
    assert book.band_factor("SuperC", 1) == 1.09
    assert book.band_factor("L", 1) == pytest.approx(1.18)
    assert book.band_factor("C", 1) == 1.0
    assert book.band_factor("SuperC", 10) == pytest.approx(1 + 0.1 * 0.9**10)
    r = synthetic_results([[0, 1, 0]], [[0, 4, 0]], [[0]])
    cost = optical_cost(r, [(0, 1, 10.0)], 2)
    assert cost.license_adjusted[0] == pytest.approx(1.999 * 1.09, abs=1e-12)


def test_mcs_and_rob_components():
    # 17 lightpaths end at node 0 in year 0 -> two 16-port MCS there, two at node 1
    rows = [[0, 0, 1, 0, 0, 0, 0, 1, 400, 20, 3]] * 17
    r = synthetic_results([[34, 0, 0], [34, 0, 0]], [[136, 0, 0], [136, 0, 0]], [[1, 0], [1, 2]], rows)
    cost = optical_cost(r, [(0, 1, 5.0), (1, 2, 7.0)], 3)
    assert cost.mcs.tolist() == [0.7 * 4, 0.0]
    # year 0: link 0 adds one FP at nodes 0 and 1; year 1: link 1 adds two at nodes 1 and 2
    assert cost.rob.tolist() == [1.9 * 2, 1.9 * 4]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3), st.integers(0, 2)), min_size=1, max_size=8))
def test_otco_telescopes(steps):
    bvt = np.cumsum([[b, 0, 0] for b, _, _ in steps], axis=0)
    lic = np.cumsum([[b + e, 0, 0] for b, e, _ in steps], axis=0)
    fp = np.maximum.accumulate(np.array([[f] for _, _, f in steps]), axis=0)
    r = synthetic_results(bvt, lic, fp)
    ip = np.arange(len(steps), dtype=float)
    cost = optical_cost(r, [(0, 1, 3.0)], 2, ip_capex=ip)
    assert cost.otco.tolist() == list(accumulate((cost.capex + cost.opex).tolist()))
    assert cost.otco[-1] == pytest.approx(float(np.sum(cost.capex + cost.opex)), rel=1e-12)
    assert np.allclose(cost.tco - cost.otco, np.cumsum(ip))


def test_inconsistent_ledger_rejected():
    r = synthetic_results([[2, 0, 0], [1, 0, 0]], [[8, 0, 0], [8, 0, 0]], [[1], [1]])
    with pytest.raises(AnalysisError):
        optical_cost(r, [(0, 1, 1.0)], 2)


def test_cost_book_validation():
    with pytest.raises(AnalysisError):
        CostBook(c_rob=-1)
    with pytest.raises(AnalysisError):
        CostBook(ip_router_costs=((800, 3.2), (400, 1.6)))


# ----------------------------------------------------------------- routers


def year5(value: float) -> np.ndarray:
    return np.linspace(value / 5, value, 5)[:, None]


def test_router_class_examples():
    assert size_ip_routers(year5(450.0)).base_class.tolist() == [800]
    assert size_ip_routers(year5(30000.0)).base_class.tolist() == [25600]
    assert size_ip_routers(year5(400.0)).base_class.tolist() == [400]


def test_router_counts_grow_with_demand():
    demand = np.array([[300.0], [700.0], [1300.0], [1500.0], [2000.0], [2500.0]])
    fleet = size_ip_routers(demand, base_year=5)
    assert fleet.base_class.tolist() == [3200]
    assert fleet.counts[:, 0].tolist() == [1, 1, 1, 1, 1, 1]
    big = size_ip_routers(np.array([[20000.0], [60000.0]]), base_year=5)
    assert big.base_class.tolist() == [25600]
    assert big.counts[:, 0].tolist() == [1, 3]
    assert big.capex.tolist() == [102.4, 2 * 102.4]


def test_nodes_without_demand_get_no_router():
    fleet = size_ip_routers(np.array([[0.0, 10.0], [0.0, 10.0]]))
    assert fleet.base_class.tolist() == [0, 400]
    with pytest.raises(AnalysisError):
        size_ip_routers(np.zeros((0, 2)))


def test_router_demand_is_cumulative_over_levels():
    r = synthetic_results([[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [0, 0, 0]], [[0], [0]], capacity=[[1, 2], [3, 4]])
    r.levels = [3, 2]
    for key in ("bvt_data", "link_data"):
        getattr(r, key)[2] = getattr(r, key)[3]
    r.capacity[2] = np.array([[10.0, 0.0], [0.0, 10.0]])
    assert router_demand(r).tolist() == [[11, 2], [14, 16]]


# ------------------------------------------------------------------ energy


def test_one_bvt_year():
    e = energy_report(np.array([1.0]), None)
    assert e.optical_mwh[0] == 1.4016 and e.electrical_mwh[0] == 0.0


def test_one_large_router_year():
    fleet = RouterFleet(np.array([25600.0]), np.array([[1]]), np.zeros(1), np.array([[30000.0]]))
    e = energy_report(np.array([0.0]), fleet)
    assert e.electrical_mwh[0] == 66.576


def test_zero_equipment_zero_energy():
    e = energy_report(np.zeros(3), None)
    assert not e.total_mwh.any() and not e.normalized_mwh_per_100g.any()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=1, max_size=6), st.integers(1, 4))
def test_total_is_optical_plus_electrical(bvts, routers):
    years = len(bvts)
    fleet = RouterFleet(np.array([800.0, 0.0]), np.full((years, 2), routers), np.zeros(years), np.ones((years, 2)))
    e = energy_report(np.array(bvts, dtype=float), fleet, PowerBook(), np.full(years, 200.0))
    assert np.all(np.abs(e.total_mwh - (e.optical_mwh + e.electrical_mwh)) <= 1e-9)
    assert np.allclose(e.normalized_mwh_per_100g, e.total_mwh / 2)


# ----------------------------------------------------------------- latency


def enumerate_routes(node, lat, dst, levels):
    """Flat enumeration of every choice tuple, independent of the recursion."""
    routes = []
    for choice in itertools.product(range(2), repeat=len(levels)):
        n, trail, total, ok = node, [node], 0.0, True
        for stage, level in enumerate(levels):
            d = int(dst[level][n, choice[stage]])
            if d < 0:
                ok = False
                break
            total += float(lat[level][n, choice[stage]])
            n = d
            trail.append(n)
        if ok:
            routes.append((tuple(trail), total))
    return sorted(routes)


def random_hierarchy_tables(rng, depth: int):
    """Latency/destination tables for ``depth`` stages over disjoint node groups."""
    sizes = [int(rng.integers(1, 5)) for _ in range(depth + 1)]
    starts = np.cumsum([0] + sizes)
    n = int(starts[-1])
    levels = list(range(depth + 1, 1, -1))  # e.g. [4, 3, 2]
    lat, dst = {}, {}
    for stage, level in enumerate(levels):
        lat[level] = np.full((n, 2), np.nan)
        dst[level] = np.full((n, 2), -1, dtype=np.int64)
        upper = np.arange(starts[stage + 1], starts[stage + 2])
        for v in range(starts[stage], starts[stage + 1]):
            k = 1 if upper.size == 1 or rng.random() < 0.3 else 2
            dst[level][v, :k] = rng.choice(upper, size=k, replace=False)
            lat[level][v, :k] = rng.integers(0, 500, size=k)
    return lat, dst, levels, list(range(sizes[0]))


def test_latency_recursion_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(100):
        lat, dst, levels, sources = random_hierarchy_tables(rng, int(rng.integers(1, 4)))
        for s in sources:
            assert sorted(e2e_latency_paths(s, lat, dst, levels)) == enumerate_routes(s, lat, dst, levels)


def chain_tables(segments_km, us_per_km=5.0):
    n = len(segments_km) + 1
    levels = list(range(n, 1, -1))[: len(segments_km)]
    lat, dst = {}, {}
    for stage, (level, km) in enumerate(zip(levels, segments_km)):
        lat[level] = np.full((n, 2), np.nan)
        dst[level] = np.full((n, 2), -1, dtype=np.int64)
        lat[level][stage, 0] = km * us_per_km
        dst[level][stage, 0] = stage + 1
    return lat, dst, levels


def test_single_segment_propagation():
    lat, dst, levels = chain_tables([10.0])
    assert e2e_latency_paths(0, lat, dst, levels) == [((0, 1), 50.0)]
    assert e2e_latency_total(lat, dst, levels).tolist() == [50.0]


def test_three_segment_worked_example():
    lat, dst, levels = chain_tables([10.0, 20.0, 30.0])
    assert e2e_latency_total(lat, dst, levels).tolist() == [700.0]


def test_zero_length_two_stages():
    lat, dst, levels = chain_tables([0.0, 0.0, 0.0])
    assert e2e_latency_total(lat, dst, levels).tolist() == [400.0]


def test_removing_a_stage_removes_its_delay():
    lat, dst, levels = chain_tables([10.0, 0.0, 30.0])
    full = e2e_latency_total(lat, dst, levels)[0]
    # fold the zero-length middle hop away: the node homes straight to the top
    lat2 = {levels[0]: lat[levels[0]].copy(), levels[2]: lat[levels[2]]}
    dst2 = {levels[0]: dst[levels[0]].copy(), levels[2]: dst[levels[2]]}
    dst2[levels[0]][0, 0] = 2
    bypassed = e2e_latency_total(lat2, dst2, [levels[0], levels[2]])[0]
    assert full - bypassed == 200.0


def test_binary_hierarchy_has_two_to_the_depth_routes():
    depth = 3
    lat, dst = {}, {}
    levels = [4, 3, 2]
    for stage, level in enumerate(levels):
        lat[level] = np.ones((2, 2))
        dst[level] = np.array([[0, 1], [1, 0]])
    assert len(e2e_latency_paths(0, lat, dst, levels)) == 2**depth


def test_latency_errors_and_options(tmp_path):
    lat, dst, levels = chain_tables([10.0, 20.0])
    with pytest.raises(LatencyError, match="no latency row"):
        e2e_latency_paths(1, lat, dst, [levels[0], levels[1]])
    with pytest.raises(LatencyError, match="cycle"):
        e2e_latency_paths(0, lat, dst, [levels[0], levels[0]])
    out = e2e_latency_total(lat, dst, levels, include_final=True, save_path=tmp_path / "lat.npz")
    assert out.tolist() == [150.0 + 400.0]
    assert (tmp_path / "lat.npz").exists()
    assert e2e_latency_total(lat, dst, []).size == 0


# --------------------------------------------------------- loading, reports


def test_load_results_errors(tmp_path, golden_full):
    sc, _, _ = golden_full
    assert load_results(tmp_path, []).levels == []
    with pytest.raises(FileNotFoundError, match="run.json"):
        load_results(tmp_path, [3])
    broken = tmp_path / "broken"
    shutil.copytree(sc.results_dir, broken)
    (broken / "metro12_HL2_link_info.npz").unlink()
    with pytest.raises(FileNotFoundError, match="metro12_HL2_link_info.npz"):
        load_results(broken, [3, 2])


def test_all_reports(tmp_path, golden_full):
    _, _, a = golden_full
    files = [p for kind in REPORT_KINDS for p in emit_report(kind, a, tmp_path)]
    assert len(files) == 8 and all(p.suffix == ".csv" for p in files)
    svg = emit_report("cost", a, tmp_path / "svg", svg=True)
    assert [p.suffix for p in svg] == [".csv", ".svg"]
    with pytest.raises(AnalysisError):
        emit_report("nope", a, tmp_path)


def test_link_state_and_fp_usage_reports(tmp_path, golden_full):
    _, _, a = golden_full
    (path,) = emit_report("link_state", a, tmp_path)
    rows = path.read_text().splitlines()
    assert len(rows) == 1 + a.results.years
    assert len(rows[0].split(",")) == 1 + len(a.run["links"])
    (path,) = emit_report("fp_usage", a, tmp_path)
    km = [float(line.split(",")[2]) for line in path.read_text().splitlines()[1:]]
    assert km == a.effective_fp_km.tolist()


def test_relative_difference():
    assert relative_difference(80.0, 100.0) == -20.0
    assert relative_difference(0.0, 0.0) == 0.0
    assert relative_difference(1.0, 0.0) == float("inf")


def test_compare_golden_pair_matches_hand_ratios(golden_full, golden_bypass):
    full = json.loads((GOLDEN / "expected_full.json").read_text())
    byp = json.loads((GOLDEN / "expected_bypass.json").read_text())
    rows = {m: (va, vb, rel) for m, va, vb, rel in compare_runs(golden_full[0].results_dir, golden_bypass[0].results_dir)}

    def ratio(b, a):
        return (b - a) / a * 100

    assert rows["bvts"][2] == pytest.approx(ratio(byp["bvt_total"][-1], full["bvt_total"][-1]), abs=1e-9)
    assert rows["licenses"][2] == pytest.approx(ratio(byp["license_total"][-1], full["license_total"][-1]), abs=1e-9)
    assert rows["fp_km"][2] == pytest.approx(ratio(byp["fp_km"][-1], full["fp_km"][-1]), abs=1e-9)
    assert rows["tco"][2] == pytest.approx(ratio(byp["tco"][-1], full["tco"][-1]), abs=1e-9)
    assert rows["otco"][2] == pytest.approx(ratio(byp["otco"][-1], full["otco"][-1]), abs=1e-9)
    assert rows["energy_mwh"][2] == pytest.approx(ratio(sum(byp["total_mwh"]), sum(full["total_mwh"])), abs=1e-9)
    mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
    assert rows["mean_latency_us"][2] == pytest.approx(ratio(mean(byp["latency_us"]), mean(full["latency_us"])), abs=1e-9)
    # swapping the inputs flips the sign and changes the denominator
    swapped = {m: rel for m, _, _, rel in compare_runs(golden_bypass[0].results_dir, golden_full[0].results_dir)}
    for m, (va, vb, rel) in rows.items():
        if va and vb:
            assert swapped[m] == pytest.approx(ratio(va, vb))
            assert np.sign(swapped[m]) == -np.sign(rel)


def test_compare_identical_and_mismatched(tmp_path, golden_full):
    d = golden_full[0].results_dir
    assert all(rel == 0.0 for _, _, _, rel in compare_runs(d, d))
    other = tmp_path / "other"
    shutil.copytree(d, other)
    info = json.loads((other / "run.json").read_text())
    info["seed"] += 1
    (other / "run.json").write_text(json.dumps(info))
    with pytest.raises(AnalysisError, match="seed"):
        compare_runs(d, other)
    info["seed"] -= 1
    info["topology"] = "elsewhere"
    (other / "run.json").write_text(json.dumps(info))
    with pytest.raises(AnalysisError, match="topology"):
        compare_runs(d, other)
