"""Command-line client of the planning service.

All computation goes through the FastAPI app: in-process by default, or a
remote server when --server is given.  Results land as deterministic CSV
artifacts (9 significant digits) plus a JSON run report with content hashes.

Exit codes: 0 success, 1 solver failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from .errors import RoadplanError, ScenarioError

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2


def _fmt(value) -> str:
    return f"{value:.9g}"


class ServiceClient:
    """Thin wrapper speaking to the app in-process or over HTTP."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app
            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code == 422:
            raise ScenarioError(resp.json().get("detail", "invalid request"))
        if resp.status_code >= 400:
            raise RoadplanError(resp.json().get("detail", f"HTTP {resp.status_code}"))
        return resp.json()

    def get(self, path: str) -> dict:
        resp = self._client.get(path)
        resp.raise_for_status()
        return resp.json()


class RunReport:
    def __init__(self, command: str):
        self.command = command
        self.t0 = time.time()
        self.scalars: dict = {}
        self.files: list = []

    def add_file(self, path: Path):
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.files.append({"path": str(path), "sha256": digest})

    def finish(self, out_dir: Path | None, verbose: bool) -> dict:
        doc = {"command": self.command,
               "wall_time_s": round(time.time() - self.t0, 3),
               "scalars": self.scalars,
               "files": self.files}
        if out_dir is not None:
            path = out_dir / "report.json"
            path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(json.dumps(doc["scalars"], sort_keys=True))
        if verbose:
            for f in self.files:
                print(f"wrote {f['path']}  sha256={f['sha256'][:16]}")
        return doc


def _write_csv(path: Path, header: list, rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario_ref(args) -> dict:
    ref: dict = {}
    if getattr(args, "scenario", None):
        import yaml
        with open(args.scenario) as fh:
            ref["scenario"] = yaml.safe_load(fh)
    else:
        ref["fixture"] = args.fixture
    if getattr(args, "seed", None) is not None:
        ref["seed"] = args.seed
    return ref


def _emit_trajectory(out: Path, name: str, traj: dict, report: RunReport):
    times = traj["times"]
    states = traj["states"]
    controls = traj["controls"]
    rows = []
    for i, t in enumerate(times):
        u = controls[min(i, len(controls) - 1)] if controls else [0.0, 0.0]
        z = list(states[i]) + [0.0] * (5 - len(states[i]))
        rows.append([float(t)] + [float(v) for v in z[:5]]
                    + [float(u[1]), float(u[0])])       # columns a, w ordered per header
    path = _write_csv(out / name, ["t", "x", "y", "psi", "v", "delta", "a", "w"],
                      rows)
    report.add_file(path)


def cmd_plan_grid(args, client: ServiceClient) -> int:
    report = RunReport("plan-grid")
    data = client.post("/plan/grid", _scenario_ref(args))
    out = _out_dir(args)
    p1 = _write_csv(out / "grid_waypoints.csv", ["x", "y"],
                    [[float(a), float(b)] for a, b in data["waypoints"]])
    p2 = _write_csv(out / "grid_thinned.csv", ["x", "y"],
                    [[float(a), float(b)] for a, b in data["thinned"]])
    report.add_file(p1)
    report.add_file(p2)
    report.scalars = {"cost": data["cost"], "expanded": data["expanded"],
                      "spline_length": data["spline_length"]}
    report.finish(out, args.verbose)
    return EXIT_OK


def cmd_plan_lattice(args, client: ServiceClient) -> int:
    report = RunReport("plan-lattice")
    data = client.post("/plan/lattice", _scenario_ref(args))
    out = _out_dir(args)
    p = _write_csv(out / "lattice_states.csv", ["x", "y", "psi"],
                   [[float(a), float(b), float(c)] for a, b, c in data["states"]])
    report.add_file(p)
    report.scalars = {"cost": data["cost"], "expanded": data["expanded"],
                      "max_steer": data["max_steer"]}
    report.finish(out, args.verbose)
    return EXIT_OK


def cmd_solve_parking(args, client: ServiceClient) -> int:
    report = RunReport("solve-parking")
    data = client.post("/solve/parking", {"n_nodes": args.n, "scheme": args.method})
    out = _out_dir(args)
    _emit_trajectory(out, "parking_traj.csv", data["trajectory"], report)
    report.scalars = {"tf": data["tf"], "objective": data["objective"],
                      "curb_clear": data["curb_clear"],
                      "worst_zeta": data["worst_zeta"],
                      "kkt_status": data["kkt"]["status"]}
    report.finish(out, args.verbose)
    return EXIT_OK if data["kkt"]["status"] == "converged" else EXIT_SOLVER


def cmd_solve_avoidance(args, client: ServiceClient) -> int:
    report = RunReport("solve-avoidance")
    data = client.post("/solve/avoidance",
                       {"n_nodes": args.n, "scheme": args.method,
                        "p1": args.p1, "p2": args.p2})
    out = _out_dir(args)
    _emit_trajectory(out, "avoidance_traj.csv", data["trajectory"], report)
    report.scalars = {"d": data["d"], "tf": data["tf"],
                      "objective": data["objective"],
                      "a_lower_fraction": data["accel_lower_bound_fraction"],
                      "kkt_status": data["kkt"]["status"]}
    report.finish(out, args.verbose)
    return EXIT_OK if data["kkt"]["status"] == "converged" else EXIT_SOLVER


def cmd_sensitivity(args, client: ServiceClient) -> int:
    report = RunReport("sensitivity")
    data = client.post("/solve/sensitivity", {"n_nodes": args.n,
                                              "scheme": args.method})
    out = _out_dir(args)
    rows = [[float(p[0]), float(p[1]), float(t["predicted_d"]),
             float(t["predicted_tf"])]
            for t in data["taylor"] for p in [t["p"]]]
    path = _write_csv(out / "taylor_predictions.csv",
                      ["p1", "p2", "predicted_d", "predicted_tf"], rows)
    report.add_file(path)
    report.scalars = {"d": data["d"], "tf": data["tf"],
                      "dtf_dp1": data["dtf_dp"][0], "dtf_dp2": data["dtf_dp"][1],
                      "dd_dp1": data["dd_dp"][0], "dd_dp2": data["dd_dp"][1]}
    report.finish(out, args.verbose)
    return EXIT_OK


def cmd_mpc(args, client: ServiceClient) -> int:
    report = RunReport("mpc")
    data = client.post("/mpc/run", _scenario_ref(args))
    out = _out_dir(args)
    times = data["times"]
    for vid, states in sorted(data["trajectories"].items()):
        rows = [[float(times[i])] + [float(v) for v in states[i]]
                for i in range(len(times))]
        path = _write_csv(out / f"vehicle_{vid}.csv",
                          ["t", "x", "y", "psi", "v", "delta"], rows)
        report.add_file(path)
    log_rows = [[r["round"], float(r["t"]), r["vehicle"], r["solve_status"],
                 r["priority_rank"], float(r["min_ellipse_value"])]
                for r in data["logs"]]
    path = _write_csv(out / "rounds.csv",
                      ["round", "t", "vehicle", "solve_status", "priority_rank",
                       "min_ellipse_value"], log_rows)
    report.add_file(path)
    report.scalars = {"reached": data["reached"],
                      "min_pair_clearance": data["min_pair_clearance"],
                      "rounds": len(times) - 1}
    report.finish(out, args.verbose)
    all_reached = all(data["reached"].values())
    return EXIT_OK if all_reached else EXIT_SOLVER


def cmd_track(args, client: ServiceClient) -> int:
    report = RunReport("track")
    payload = _scenario_ref(args)
    payload["with_noise"] = args.noise
    if args.offset:
        payload["offset_initial"] = args.offset
    if args.gains:
        payload["gains"] = args.gains
    data = client.post("/track/run", payload)
    out = _out_dir(args)
    rows = [[float(data["times"][i]), float(data["states"][i][0]),
             float(data["states"][i][1]), float(data["ref_positions"][i][0]),
             float(data["ref_positions"][i][1]), float(data["errors"][i])]
            for i in range(len(data["times"]))]
    path = _write_csv(out / "tracking.csv", ["t", "x", "y", "x_d", "y_d", "err"],
                      rows)
    report.add_file(path)
    report.scalars = {"max_error": data["max_error"],
                      "final_error": data["final_error"],
                      "stable": data["stable"],
                      "eig_max_real": data["eigenvalue_max_real"]}
    report.finish(out, args.verbose)
    return EXIT_OK


def cmd_verify(args, client: ServiceClient) -> int:
    from . import acceptance
    selection = args.criteria.split(",") if args.criteria else None
    results = acceptance.run_all(selection, verbose=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def cmd_serve(args, client=None) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def cmd_dump_config(args, client: ServiceClient) -> int:
    data = client.post("/scenario/echo", _scenario_ref(args))
    import yaml
    sys.stdout.write(yaml.safe_dump(data["scenario"], sort_keys=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadplan",
        description="Optimization-based motion planning toolkit")
    parser.add_argument("--server", help="base URL of a running service "
                                         "(default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--verbose", action="store_true")
        if scenario:
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--scenario", help="scenario YAML file")
            g.add_argument("--fixture", help="shipped fixture name")

    p = sub.add_parser("plan-grid", help="8-connected grid shortest path")
    common(p)
    p.set_defaults(func=cmd_plan_grid)

    p = sub.add_parser("plan-lattice", help="kinematic lattice shortest path")
    common(p)
    p.set_defaults(func=cmd_plan_lattice)

    p = sub.add_parser("solve-parking", help="parking maneuver optimal control")
    common(p, scenario=False)
    p.add_argument("--n", type=int, default=101, help="grid points")
    p.add_argument("--method", choices=["euler", "rk4"], default="rk4")
    p.set_defaults(func=cmd_solve_parking)

    p = sub.add_parser("solve-avoidance", help="avoidance maneuver optimal control")
    common(p, scenario=False)
    p.add_argument("--n", type=int, default=51)
    p.add_argument("--method", choices=["euler", "rk4"], default="rk4")
    p.add_argument("--p1", type=float, default=0.0)
    p.add_argument("--p2", type=float, default=0.0)
    p.set_defaults(func=cmd_solve_avoidance)

    p = sub.add_parser("sensitivity", help="parametric sensitivities + Taylor updates")
    common(p, scenario=False)
    p.add_argument("--n", type=int, default=51)
    p.add_argument("--method", choices=["euler", "rk4"], default="rk4")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("mpc", help="distributed hierarchical MPC simulation")
    common(p)
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("track", help="flatness-based tracking simulation")
    common(p)
    p.add_argument("--noise", action="store_true", help="enable measurement noise")
    p.add_argument("--offset", type=float, nargs=2, metavar=("X", "Y"),
                   help="override the initial position")
    p.add_argument("--gains", type=float, nargs=6,
                   metavar=("K1", "K2", "K3", "K4", "K5", "K6"),
                   help="override the feedback gains")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("verify", help="run the acceptance criteria")
    p.add_argument("--criteria", help="comma-separated criterion ids (default all)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump-config", help="echo a validated scenario")
    common(p)
    p.set_defaults(func=cmd_dump_config)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        client = ServiceClient(args.server)
        return args.func(args, client)
    except ScenarioError as exc:
        print(f"ERROR invalid-input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RoadplanError as exc:
        print(f"ERROR solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"ERROR io: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
