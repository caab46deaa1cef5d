"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

The network-scale ingestion criterion uses the real benchmark files when
available (POANET_ANAHEIM_NET / POANET_ANAHEIM_TRIPS environment variables or
tests/data/anaheim/); otherwise it falls back to a deterministic synthetic
fixture with the same published dimensions.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from poanet.cli import main as cli_main
from poanet.equilibrium import (SolverSettings, link_latencies, price_of_anarchy,
                                relative_gap, solve_so, solve_ue, total_latency,
                                wardrop_epsilon)
from poanet.inverse_vi import ObservationSet, estimate_cost
from poanet.latency import LatencyFunction, bpr
from poanet.network import DemandVector, build_network, enumerate_routes
from poanet.observations import write_flow_file
from poanet.od_adjust import AdjustSettings, adjust_demand
from poanet.od_estimate import initial_demand
from poanet.sensitivity import delta_v_capacity, delta_v_freeflow, sensitivity_report
from poanet.tntp import network_from_tntp, parse_tntp_network, parse_tntp_trips

from netgen import grid_network, random_network, write_benchmark_fixture


def report(name, detail, elapsed, budget):
    print(f"[acceptance] {name}: PASS - {detail} ({elapsed:.2f}s, budget {budget:.0f}s)")
    assert elapsed < budget, f"{name} exceeded its runtime budget"


FW = "exact_line_search"


class TestA1AnalyticOracle:
    def test_a1(self, pigou):
        start = time.perf_counter()
        net, demand, f = pigou
        settings = SolverSettings(max_iterations=10000, rel_gap_tol=1e-8, step_rule=FW)
        ue = solve_ue(net, demand, f, settings)
        so = solve_so(net, demand, f, settings)
        l_ue = total_latency(net, ue.flows, f)
        l_so = total_latency(net, so.flows, f)
        poa = price_of_anarchy(net, ue.flows, so.flows, f)
        assert l_ue == pytest.approx(2.0, abs=1e-3)
        assert l_so == pytest.approx(1.75, abs=1e-3)
        assert poa == pytest.approx(8.0 / 7.0, abs=1e-3)
        report("A1 analytic price-of-anarchy oracle",
               f"PoA={poa:.6f} L_UE={l_ue:.4f} L_SO={l_so:.4f}",
               time.perf_counter() - start, 1.0)


class TestA2Symmetry:
    def test_a2(self, symmetric_pair):
        start = time.perf_counter()
        net, demand, f = symmetric_pair
        settings = SolverSettings(max_iterations=10000, rel_gap_tol=1e-10, step_rule=FW)
        ue = solve_ue(net, demand, f, settings)
        so = solve_so(net, demand, f, settings)
        poa = price_of_anarchy(net, ue.flows, so.flows, f)
        assert poa == pytest.approx(1.0, abs=1e-6)
        report("A2 symmetric pair", f"PoA={poa:.9f}",
               time.perf_counter() - start, 1.0)


@pytest.fixture(scope="module")
def transform_batch():
    """Twenty random instances solved both ways, shared by A3 and A8."""
    rng = np.random.default_rng(77)
    settings = SolverSettings(max_iterations=30000, rel_gap_tol=1e-5, step_rule=FW)
    batch = []
    start = time.perf_counter()
    for _ in range(20):
        net = random_network(rng, n_nodes=8, n_extra=12, n_ods=8,
                             cap_range=(12.0, 70.0))
        dem = DemandVector(rng.uniform(3, 15, size=len(net.od_pairs)))
        so = solve_so(net, dem, bpr(), settings)
        ue_transformed = solve_ue(net, dem, bpr().as_marginal(), settings)
        ue = solve_ue(net, dem, bpr(),
                      SolverSettings(max_iterations=30000, rel_gap_tol=1e-5,
                                     step_rule=FW, route_polish=True))
        batch.append((net, dem, so, ue_transformed, ue))
    return batch, time.perf_counter() - start


class TestA3UserSocialTransform:
    def test_a3(self, transform_batch):
        batch, solve_time = transform_batch
        start = time.perf_counter()
        worst_flow = 0.0
        worst_obj = 0.0
        for net, dem, so, ue_t, _ in batch:
            assert net.n_nodes <= 10 and net.n_links <= 30 and len(net.od_pairs) <= 15
            denom = max(np.linalg.norm(so.flows.values), 1.0)
            worst_flow = max(worst_flow,
                             float(np.linalg.norm(so.flows.values - ue_t.flows.values)) / denom)
            l_so = total_latency(net, so.flows, bpr())
            l_t = total_latency(net, ue_t.flows, bpr())
            worst_obj = max(worst_obj, abs(l_so - l_t) / max(abs(l_so), 1.0))
        assert worst_flow <= 1e-4
        assert worst_obj <= 1e-5
        elapsed = solve_time + time.perf_counter() - start
        report("A3 user-social transform on 20 random networks",
               f"max flow diff {worst_flow:.1e}, max objective diff {worst_obj:.1e}",
               elapsed, 30.0)


class TestA4InverseRecovery:
    def test_a4(self, corridor_observations):
        start = time.perf_counter()
        network, flows, demands, f_true = corridor_observations
        assert network.n_links >= 15
        assert len(network.od_pairs) >= 5
        ratios = np.concatenate([f.values / network.capacities for f in flows])
        positive = ratios[ratios > 1e-9]
        assert positive.min() <= 0.2 and ratios.max() >= 1.3

        obs = ObservationSet.for_network(network, flows, demands)
        grid = np.linspace(0.0, 1.2, 241)
        sup = {}
        for degree in (3, 4, 5, 6):
            _, f_hat = estimate_cost(obs, degree, kernel_offset=1.5, ridge_weight=0.01)
            sup[degree] = float(np.max(np.abs(f_hat.value(grid) - f_true.value(grid))))
        assert sup[5] <= 0.1
        assert all(sup[3] > sup[n] for n in (4, 5, 6))
        report("A4 latency recovery from near-exact equilibria",
               "sup errors " + ", ".join(f"n={n}: {sup[n]:.5f}" for n in sorted(sup)),
               time.perf_counter() - start, 120.0)


class TestA5DemandAdjustment:
    def test_a5(self):
        start = time.perf_counter()
        links = grid_network(rows=4, cols=4, seed=12)
        rng = np.random.default_rng(12)
        ods = []
        seen = set()
        while len(ods) < 24:
            o, d = int(rng.integers(16)), int(rng.integers(16))
            if o != d and (o, d) not in seen:
                seen.add((o, d))
                ods.append((o, d))
        net = build_network(links, ods)
        assert net.n_nodes <= 30 and net.n_links <= 100 and len(ods) <= 50
        f = bpr()
        g_true = DemandVector(rng.uniform(120.0, 280.0, size=len(ods)))
        observed = solve_ue(net, g_true, f,
                            SolverSettings(max_iterations=8000, rel_gap_tol=1e-5,
                                           step_rule=FW)).flows
        g0 = DemandVector(g_true.values * rng.uniform(0.8, 1.2, size=len(ods)))
        settings = AdjustSettings(demand_weight=0.0, flow_weight=1.0, step_divisor=2,
                                  ladder_depth=10, demand_floor=0.0, stop_tol=1e-20,
                                  max_outer_iterations=10,
                                  tap_settings=SolverSettings(max_iterations=3000,
                                                              rel_gap_tol=1e-5,
                                                              step_rule=FW))
        _, trace = adjust_demand(net, f, observed, g0, settings)
        objectives = np.asarray(trace.objectives)
        assert np.all(np.diff(objectives) <= 0.0), "objective increased"
        ratio = objectives[-1] / objectives[0]
        assert len(objectives) - 1 <= 10
        assert ratio <= 0.5
        report("A5 bilevel demand adjustment",
               f"F(g_final)/F(g0) = {ratio:.4f} after {len(objectives) - 1} iterations",
               time.perf_counter() - start, 300.0)


class TestA6GLSRecovery:
    def test_a6(self):
        start = time.perf_counter()
        links = [("o", "d", 1.0, 100.0), ("d", "o", 1.0, 100.0),
                 ("a", "b", 1.0, 100.0), ("b", "a", 1.0, 100.0),
                 ("o", "a", 9.0, 100.0), ("a", "o", 9.0, 100.0)]
        net = build_network(links, [("o", "d"), ("a", "b")])
        g_true = np.array([12.0, 31.0])
        exact = np.array([12.0, 0.0, 31.0, 0.0, 0.0, 0.0])
        estimate = initial_demand(net, [exact, exact, exact])
        rel = np.linalg.norm(estimate.demand.values - g_true) / np.linalg.norm(g_true)
        assert rel <= 1e-4
        report("A6 least-squares demand recovery",
               f"relative error {rel:.2e}", time.perf_counter() - start, 10.0)


class TestA7SensitivityConsistency:
    def test_a7(self):
        start = time.perf_counter()
        settings = SolverSettings(max_iterations=5000, rel_gap_tol=1e-9, step_rule=FW)
        net = build_network([("o", "d", 1.0, 1.0), ("d", "o", 1.0, 1.0)], [("o", "d")])
        f = LatencyFunction((1.0, 1.0))
        demand = DemandVector([1.0])
        got_t = delta_v_freeflow(net, demand, f, 0, delta_t0=-0.2, settings=settings)
        # the objective is linear in the free-flow time: 0.2 * integral(1+s)
        assert got_t == pytest.approx(0.2 * 1.5, abs=1e-6)
        got_m = delta_v_capacity(net, demand, f, 0, delta_m=0.2, settings=settings)
        assert got_m == pytest.approx(1.5 - (1.0 + 1.0 / 2.4), abs=1e-6)

        rng = np.random.default_rng(79)
        worst = 0.0
        for _ in range(20):
            rnet = random_network(rng, n_nodes=5, n_extra=4, n_ods=3,
                                  cap_range=(5.0, 25.0))
            dem = DemandVector(rng.uniform(2, 10, size=len(rnet.od_pairs)))
            rep = sensitivity_report(rnet, dem, bpr(),
                                     SolverSettings(max_iterations=4000,
                                                    rel_gap_tol=1e-7, step_rule=FW))
            flows = solve_ue(rnet, dem, bpr(),
                             SolverSettings(max_iterations=4000, rel_gap_tol=1e-7,
                                            step_rule=FW)).flows.values
            carrying = flows > 1e-6 * max(flows.sum(), 1.0)
            if carrying.any():
                worst = min(float(rep.delta_v_t0[carrying].min()),
                            float(rep.delta_v_m[carrying].min()), worst)
        assert worst >= -1e-7
        report("A7 sensitivity consistency",
               f"closed forms within 1e-6; min objective drop {worst:.1e}",
               time.perf_counter() - start, 30.0)


class TestA8EquilibriumQuality:
    def test_a8(self, transform_batch):
        batch, _ = transform_batch
        start = time.perf_counter()
        check_tol = 1e-4
        for net, dem, _, _, ue in batch:
            gap = relative_gap(net, ue.flows, dem, bpr())
            assert gap <= 1e-4
            l_ue = total_latency(net, ue.flows, bpr())
            assert wardrop_epsilon(net, ue.flows, dem, bpr()) / l_ue <= 1e-3
            t = link_latencies(net, ue.flows, bpr())
            for i in range(len(net.od_pairs)):
                enumerated = {r.link_ids for r in enumerate_routes(net, i, k_max=3,
                                                                   link_weights=t)}
                used = [sum(t[l] for l in route)
                        for route, value in ue.route_flows.get(i, {}).items()
                        if value > 1e-6 * dem.values[i] and route in enumerated]
                if len(used) > 1:
                    assert max(used) - min(used) <= 10 * check_tol * np.mean(used)
        report("A8 equilibrium quality on the A3 batch",
               "gap, slack ratio, and route-cost spread within bounds",
               time.perf_counter() - start, 30.0)


@pytest.fixture(scope="module")
def benchmark_paths(tmp_path_factory):
    env_net = os.environ.get("POANET_ANAHEIM_NET")
    env_trips = os.environ.get("POANET_ANAHEIM_TRIPS")
    if env_net and env_trips:
        return Path(env_net), Path(env_trips), "real benchmark files"
    data_dir = Path(__file__).parent / "data" / "anaheim"
    net = data_dir / "anaheim_net.tntp"
    trips = data_dir / "anaheim_trips.tntp"
    if net.exists() and trips.exists():
        return net, trips, "real benchmark files"
    tmp = tmp_path_factory.mktemp("benchmark")
    net = tmp / "net.tntp"
    trips = tmp / "trips.tntp"
    write_benchmark_fixture(net, trips)
    return net, trips, "synthetic fixture with the published dimensions"


class TestA9BenchmarkIngestion:
    def test_a9(self, benchmark_paths):
        start = time.perf_counter()
        net_path, trips_path, source = benchmark_paths
        parsed = parse_tntp_network(net_path)
        assert parsed.num_zones == 38
        assert parsed.num_nodes == 416
        assert parsed.num_links == 914
        trips = parse_tntp_trips(trips_path, num_zones=parsed.num_zones)
        assert len(trips.od_pairs) == 38 * 37
        network = network_from_tntp(parsed, od_pairs=trips.od_pairs)
        demand = trips.demand_for(network)
        result = solve_ue(network, demand, bpr(),
                          SolverSettings(max_iterations=5000, rel_gap_tol=1e-4,
                                         step_rule=FW))
        assert result.converged
        assert result.final_rel_gap <= 1e-4
        report("A9 benchmark-format ingestion and solve",
               f"{source}; gap {result.final_rel_gap:.1e} in {result.iterations} iterations",
               time.perf_counter() - start, 120.0)


class TestA10Determinism:
    def _run_all(self, workdir: Path):
        workdir.mkdir(parents=True, exist_ok=True)
        net = workdir / "net.tntp"
        net.write_text(
            "<NUMBER OF ZONES> 2\n<NUMBER OF NODES> 2\n<FIRST THRU NODE> 1\n"
            "<NUMBER OF LINKS> 3\n<END OF METADATA>\n"
            "1 2 1 1 1 0.15 4 0 0 1 ;\n"
            "1 2 1e9 2 2 0.15 4 0 0 1 ;\n"
            "2 1 1 1 1 0.15 4 0 0 1 ;\n")
        trips = workdir / "trips.tntp"
        trips.write_text("<NUMBER OF ZONES> 2\n<END OF METADATA>\n"
                         "Origin 1\n 2 : 1.0;\nOrigin 2\n 1 : 0.0;\n")
        coeffs = workdir / "f.json"
        coeffs.write_text(json.dumps({"degree": 1, "offset_c": 0.0,
                                      "coefficients": [1.0, 1.0]}))
        obs = workdir / "obs.csv"
        write_flow_file(obs, [np.array([1.0, 0.0, 0.0]), np.array([0.9, 0.0, 0.0])])
        g0 = workdir / "g0.csv"
        g0.write_text("origin,destination,demand\n1,2,1.2\n")
        speeds = workdir / "speeds.csv"
        speeds.write_text("link_id,timestamp,speed,free_flow_speed\n"
                          "0,2012-04-18 07:10:00,45.0,60.0\n"
                          "1,2012-04-18 07:30:00,60.0,60.0\n")

        outputs = {}

        def run(name, *args):
            code = cli_main([str(a) for a in args])
            assert code == 0, f"{name} failed"

        run("solve-ue", "solve-ue", "--net", net, "--trips", trips,
            "--f-coeffs", coeffs, "--step-rule", FW, "--tol", "1e-8",
            "--out", workdir / "ue.json")
        run("solve-so", "solve-so", "--net", net, "--trips", trips,
            "--f-coeffs", coeffs, "--step-rule", FW, "--tol", "1e-8",
            "--out", workdir / "so.json")
        run("poa", "poa", "--net", net, "--trips", trips, "--f-coeffs", coeffs,
            "--step-rule", FW, "--tol", "1e-8", "--out", workdir / "poa.json")
        run("estimate-cost", "estimate-cost", "--net", net, "--obs", obs,
            "--trips", trips, "--n-grid", "2", "--c-grid", "1.0",
            "--gamma-grid", "0.1", "--out", workdir / "cost.json")
        run("estimate-od", "estimate-od", "--net", net, "--obs", obs,
            "--single-route", "--out", workdir / "g0_est.csv")
        run("adjust-od", "adjust-od", "--net", net, "--obs", obs, "--g0", g0,
            "--f-coeffs", coeffs, "--max-outer", "3",
            "--out", workdir / "trace.csv", "--demand-out", workdir / "adjusted.csv")
        run("sensitivity", "sensitivity", "--net", net, "--trips", trips,
            "--f-coeffs", coeffs, "--out", workdir / "sens.csv")
        run("meta", "meta", "--net", net, "--flows", obs, "--f-coeffs", coeffs,
            "--out", workdir / "meta.json")
        run("ingest-speeds", "ingest-speeds", "--csv", speeds, "--net", net,
            "--windows", "AM=06:00-09:00", "--out", workdir / "ingested.csv")

        for name in ("ue.json", "so.json", "poa.json", "cost.json", "g0_est.csv",
                     "trace.csv", "adjusted.csv", "sens.csv", "sens_ranking.json",
                     "meta.json", "ingested.csv", "ingested.csv.meta.json"):
            outputs[name] = (workdir / name).read_bytes()
        return outputs

    def test_a10(self, tmp_path):
        start = time.perf_counter()
        first = self._run_all(tmp_path / "run1")
        second = self._run_all(tmp_path / "run2")
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], f"{name} differs between runs"
        report("A10 byte-identical reports",
               f"{len(first)} artifacts across every report path",
               time.perf_counter() - start, 60.0)
