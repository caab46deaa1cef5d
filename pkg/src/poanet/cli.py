"""Command-line interface.

Every subcommand reads delimited inputs, runs the corresponding pipeline, and
emits a deterministic JSON or CSV report to --out (stdout without it). With
--plot, matplotlib figures land next to the report file. A flat key=value
--config file can pre-fill any long option; explicit flags win.

Exit codes: 0 success, 2 input error, 3 solver non-convergence,
4 infeasible or ill-posed problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import errors as err
from . import figures
from .equilibrium import (SolverSettings, price_of_anarchy, solve_so, solve_ue,
                          total_latency)
from .inverse_vi import ObservationSet, cross_validate, estimate_cost
from .latency import LatencyFunction, bpr
from .network import DemandVector, FlowVector
from .observations import (aggregate_observations, read_flow_file, read_speed_csv,
                           write_flow_file)
from .od_adjust import AdjustSettings, adjust_demand
from .od_estimate import initial_demand
from .reports import emit_report, render_json
from .sensitivity import (congestion_metric, flow_extremes, rank_links,
                          sensitivity_report, zone_costs)
from .tntp import network_from_tntp, parse_tntp_network, parse_tntp_trips

_INPUT_ERRORS = (
    err.InvalidLink, err.NotStronglyConnected, err.MalformedHeader, err.BadRow,
    err.MalformedBlock, err.UnknownZone, err.NonPositiveFreeFlowSpeed,
    err.EmptyWindow, err.TooFewSamples, err.InsufficientObservations,
    err.EmptyObservations, err.MissingZoneLabels, err.NonPositivePerturbedTime,
    err.NegativeCongestionRatio, ValueError, OSError, KeyError,
)
_SOLVER_ERRORS = (err.NotConverged, err.MaxIterations)
_INFEASIBLE_ERRORS = (err.Infeasible, err.Unbounded, err.InfeasibleDemand,
                      err.ZeroSocialCost, err.NonConvexObjective)


def _load_latency(path) -> LatencyFunction:
    if path is None:
        return bpr()
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return LatencyFunction(tuple(float(v) for v in data))
    return LatencyFunction.from_json_dict(data)


def _load_network_and_trips(net_path, trips_path, zone_map=None):
    parsed = parse_tntp_network(net_path)
    trips = parse_tntp_trips(trips_path, num_zones=parsed.num_zones)
    network = network_from_tntp(parsed, od_pairs=trips.od_pairs, zone_map=zone_map)
    return parsed, network, trips.demand_for(network)


def _read_g0_csv(path):
    pairs = []
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if [h.strip() for h in header[:3]] != ["origin", "destination", "demand"]:
            raise err.BadRow(1, "expected header origin,destination,demand")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 3:
                raise err.BadRow(lineno, "expected origin,destination,demand")
            pairs.append((int(parts[0]), int(parts[1])))
            values.append(float(parts[2]))
    return pairs, np.asarray(values, dtype=float)


def _write_g0_csv(path_or_none, network, demand):
    rows = [[o, d, demand.values[i]] for i, (o, d) in enumerate(network.od_pairs)]
    return emit_report({"columns": ["origin", "destination", "demand"], "rows": rows},
                       "csv", path_or_none)


def _read_zone_csv(path):
    zones = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if [h.strip() for h in header[:2]] != ["node", "zone"]:
            raise err.BadRow(1, "expected header node,zone")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            node_str, _, zone = line.partition(",")
            try:
                node = int(node_str)
            except ValueError:
                raise err.BadRow(lineno, f"bad node id {node_str!r}") from None
            zones[node] = zone.strip()
    return zones


def _emit(payload, fmt, out, plot_hook=None):
    text = emit_report(payload, fmt, out)
    if out is None:
        sys.stdout.write(text)
    elif plot_hook is not None:
        plot_hook(Path(out))
    return 0


def _solver_settings(args):
    return SolverSettings(max_iterations=args.max_iter, rel_gap_tol=args.tol,
                          step_rule=args.step_rule)


def _parse_grid(text, cast):
    return [cast(tok) for tok in str(text).split(",") if tok.strip()]


def _cmd_solve(args, social: bool):
    _, network, demand = _load_network_and_trips(args.net, args.trips)
    f = _load_latency(args.f_coeffs)
    solver = solve_so if social else solve_ue
    result = solver(network, demand, f, _solver_settings(args))
    return _emit(result.to_json_dict(), "json", args.out)


def _cmd_poa(args):
    _, network, demand = _load_network_and_trips(args.net, args.trips)
    f = _load_latency(args.f_coeffs)
    settings = _solver_settings(args)
    if args.user_flows:
        _, arrays = read_flow_file(args.user_flows, n_links=network.n_links)
        user = FlowVector(np.mean(arrays, axis=0))
    else:
        user = solve_ue(network, demand, f, settings).flows
    social = solve_so(network, demand, f, settings).flows
    payload = {
        "poa": price_of_anarchy(network, user, social, f),
        "L_user": total_latency(network, user, f),
        "L_social": total_latency(network, social, f),
        "flows_user": list(user.values),
        "flows_social": list(social.values),
    }

    def plots(out):
        if args.plot:
            figures.save_flow_comparison(out.with_name(out.stem + "_flows.png"),
                                         user.values, social.values)

    return _emit(payload, "json", args.out, plots)


def _cmd_estimate_cost(args):
    _, network, demand = _load_network_and_trips(args.net, args.trips)
    _, arrays = read_flow_file(args.obs, n_links=network.n_links)
    obs = ObservationSet.for_network(network, arrays, [demand] * len(arrays))
    n_grid = _parse_grid(args.n_grid, int)
    c_grid = _parse_grid(args.c_grid, float)
    g_grid = _parse_grid(args.gamma_grid, float)

    cv = None
    if len(n_grid) * len(c_grid) * len(g_grid) == 1 and len(obs) < args.folds:
        degree, offset, ridge = n_grid[0], c_grid[0], g_grid[0]
    else:
        cv = cross_validate(obs, n_grid, c_grid, g_grid, folds=args.folds)
        degree, offset, ridge = cv.best_degree, cv.best_offset, cv.best_ridge
    solution, f_hat = estimate_cost(obs, degree, offset, ridge)
    if cv is not None:
        solution.cv_scores = cv.scores_json()
    payload = solution.to_json_dict()
    payload["latency_function"] = f_hat.to_json_dict()

    ratios = np.concatenate([np.asarray(a) / network.capacities for a in arrays])

    def plots(out):
        if args.plot:
            figures.save_latency_fit(out.with_name(out.stem + "_latency_fit.png"),
                                     f_hat, z_max=1.2 * float(ratios.max(initial=1.0)),
                                     observed_ratios=np.sort(ratios))

    return _emit(payload, "json", args.out, plots)


def _cmd_estimate_od(args):
    parsed = parse_tntp_network(args.net)
    network = network_from_tntp(parsed)
    _, arrays = read_flow_file(args.obs, n_links=network.n_links)
    estimate = initial_demand(network, arrays, single_route=args.single_route)
    text = _write_g0_csv(args.out, network, estimate.demand)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _cmd_adjust_od(args):
    pairs, g0_values = _read_g0_csv(args.g0)
    parsed = parse_tntp_network(args.net)
    network = network_from_tntp(parsed, od_pairs=pairs)
    f = _load_latency(args.f_coeffs)
    _, arrays = read_flow_file(args.obs, n_links=network.n_links)
    observed = FlowVector(np.mean(arrays, axis=0))
    settings = AdjustSettings(
        demand_weight=args.gamma1,
        flow_weight=args.gamma2,
        step_divisor=args.rho,
        ladder_depth=args.T,
        demand_floor=args.eps1,
        stop_tol=args.eps2,
        max_outer_iterations=args.max_outer,
        tap_settings=SolverSettings(max_iterations=args.max_iter, rel_gap_tol=args.tol,
                                    step_rule=args.step_rule),
    )
    adjusted, trace = adjust_demand(network, f, observed, DemandVector(g0_values),
                                    settings)
    payload = {"columns": ["iteration", "F", "theta", "demand_shift"],
               "rows": trace.to_csv_rows()}

    def plots(out):
        if args.plot:
            figures.save_adjust_trace(out.with_name(out.stem + "_trace.png"),
                                      trace.objectives)

    code = _emit(payload, "csv", args.out, plots)
    if args.demand_out:
        _write_g0_csv(args.demand_out, network, adjusted)
    return code


def _cmd_sensitivity(args):
    _, network, demand = _load_network_and_trips(args.net, args.trips)
    f = _load_latency(args.f_coeffs)
    settings = _solver_settings(args)
    delta_t0 = -args.delta_frac * float(network.free_flow_times.min())
    delta_m = args.delta_frac * float(network.capacities.min())
    report = sensitivity_report(network, demand, f, settings,
                                delta_t0=delta_t0, delta_m=delta_m)
    payload = {"columns": ["link_id", "dV_dt0", "dV_dm", "deltaV_t0", "deltaV_m"],
               "rows": report.to_csv_rows()}
    ranking = {
        "freeflow": rank_links(report, "freeflow", args.top_k),
        "capacity": rank_links(report, "capacity", args.top_k),
        "delta_t0": report.delta_t0_used,
        "delta_m": report.delta_m_used,
    }

    def extras(out):
        emit_report(ranking, "json", out.with_name(out.stem + "_ranking.json"))
        if args.plot:
            figures.save_sensitivity(out.with_name(out.stem + "_sensitivity.png"),
                                     report.delta_v_t0, report.delta_v_m)

    code = _emit(payload, "csv", args.out, extras)
    if args.out is None:
        sys.stderr.write(render_json(ranking))
    return code


def _cmd_meta(args):
    parsed = parse_tntp_network(args.net)
    zone_map = _read_zone_csv(args.zones) if args.zones else None
    network = network_from_tntp(parsed, zone_map=zone_map)
    f = _load_latency(args.f_coeffs)
    _, arrays = read_flow_file(args.flows, n_links=network.n_links)
    flows = FlowVector(np.mean(arrays, axis=0))
    cm = congestion_metric(network, flows, f)
    extremes = flow_extremes(flows)
    payload = {
        "total_latency": total_latency(network, flows, f),
        "congestion_metric": list(cm),
        "flow_max": {"link_id": extremes.max_link, "value": extremes.max_value},
        "flow_min": {"link_id": extremes.min_link, "value": extremes.min_value},
    }
    zone_payload = None
    if zone_map:
        zone_payload = zone_costs(network, flows, f)
        payload["zone_costs"] = zone_payload

    def plots(out):
        if args.plot:
            figures.save_congestion(out.with_name(out.stem + "_congestion.png"), cm)
            if zone_payload:
                figures.save_zone_costs(out.with_name(out.stem + "_zone_costs.png"),
                                        zone_payload)

    return _emit(payload, "json", args.out, plots)


def _cmd_ingest_speeds(args):
    parsed = parse_tntp_network(args.net)
    network = network_from_tntp(parsed)
    records = read_speed_csv(args.csv)
    obs = aggregate_observations(records, args.windows, network)
    write_flow_file(args.out, obs.flows, labels=[f"obs_{k + 1}" for k in range(len(obs))])
    meta = {"labels": list(obs.labels), **obs.meta}
    emit_report(meta, "json", str(args.out) + ".meta.json")
    return 0


def _add_solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-4, help="relative gap tolerance")
    p.add_argument("--max-iter", type=int, default=5000, help="assignment iteration cap")
    p.add_argument("--step-rule", choices=["msa", "exact_line_search"], default="msa")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poanet",
        description="Price-of-anarchy estimation for road networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="key=value defaults file")
        p.add_argument("--out", default=None, help="report path (stdout if omitted)")
        p.add_argument("--plot", action="store_true",
                       help="write figures next to --out")
        return p

    p = add("solve-ue", lambda a: _cmd_solve(a, social=False),
            "user-equilibrium link flows")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--f-coeffs", default=None)
    _add_solver_flags(p)

    p = add("solve-so", lambda a: _cmd_solve(a, social=True),
            "socially optimal link flows")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--f-coeffs", default=None)
    _add_solver_flags(p)

    p = add("poa", _cmd_poa, "price of anarchy from observed or solved user flows")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--f-coeffs", required=True)
    p.add_argument("--user-flows", default=None,
                   help="observed flow CSV; solves the user problem if omitted")
    _add_solver_flags(p)

    p = add("estimate-cost", _cmd_estimate_cost,
            "recover the latency factor from flow observations")
    p.add_argument("--net", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--n-grid", default="3,4,5,6")
    p.add_argument("--c-grid", default="0.5,1.0,1.5")
    p.add_argument("--gamma-grid", default="0.01,0.1,1,10,100")
    p.add_argument("--folds", type=int, default=3)

    p = add("estimate-od", _cmd_estimate_od, "initial OD demand from observed flows")
    p.add_argument("--net", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--single-route", action="store_true",
                   help="one fastest route per OD (large networks)")

    p = add("adjust-od", _cmd_adjust_od, "bilevel demand adjustment")
    p.add_argument("--net", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--g0", required=True, help="initial demand CSV")
    p.add_argument("--f-coeffs", required=True)
    p.add_argument("--gamma1", type=float, default=0.0)
    p.add_argument("--gamma2", type=float, default=1.0)
    p.add_argument("--rho", type=int, default=2)
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--eps1", type=float, default=0.0)
    p.add_argument("--eps2", type=float, default=1e-20)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--demand-out", default=None, help="adjusted demand CSV path")
    _add_solver_flags(p)
    p.set_defaults(tol=1e-5, step_rule="exact_line_search")

    p = add("sensitivity", _cmd_sensitivity, "per-link objective sensitivities")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--f-coeffs", required=True)
    p.add_argument("--delta-frac", type=float, default=0.2)
    p.add_argument("--top-k", type=int, default=4)
    _add_solver_flags(p)
    p.set_defaults(tol=1e-6, step_rule="exact_line_search")

    p = add("meta", _cmd_meta, "congestion metrics, flow extremes, zone costs")
    p.add_argument("--net", required=True)
    p.add_argument("--flows", required=True)
    p.add_argument("--f-coeffs", required=True)
    p.add_argument("--zones", default=None, help="node,zone CSV")

    p = add("ingest-speeds", _cmd_ingest_speeds,
            "convert speed records into flow observations")
    p.add_argument("--csv", required=True)
    p.add_argument("--net", required=True)
    p.add_argument("--windows", required=True,
                   help="e.g. AM=06:30-09:00@weekday,WD=06:00-20:00@weekend")
    p.set_defaults(out_required=True)

    return parser


def _apply_config(argv):
    """Expand ``--config FILE`` into leading long options; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ValueError("--config needs a file path")
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2:]
    if not rest:
        raise ValueError("--config cannot replace the subcommand")
    injected = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line without '=': {line!r}")
            key = key.strip().lstrip("-")
            value = value.strip()
            if value.lower() in ("true", "yes", "on"):
                injected.append(f"--{key}")
            elif value.lower() in ("false", "no", "off"):
                continue
            else:
                injected.extend([f"--{key}", value])
    return [rest[0]] + injected + rest[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        if getattr(args, "out_required", False) and args.out is None:
            parser.error(f"{args.command}: --out is required")
        return args.func(args)
    except _SOLVER_ERRORS as exc:
        sys.stderr.write(f"solver did not converge: {exc}\n")
        return 3
    except _INFEASIBLE_ERRORS as exc:
        sys.stderr.write(f"infeasible or ill-posed problem: {exc}\n")
        return 4
    except _INPUT_ERRORS as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
