"""FastAPI service exposing the motion-planning toolkit.

Every heavy operation of the library is one POST endpoint with a pydantic
request/response pair; the CLI is a thin client of this app (in-process by
default, over HTTP when pointed at a running server).
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, collision, fleet, geometry, graphplan, ocp, tracking
from ..dynamics import VehicleParams
from ..errors import NoPath, RoadplanError, ScenarioError, StartOrGoalBlocked
from ..scenario import Scenario, load_fixture, parse_scenario
from . import schemas as S


def _resolve_scenario(ref: S.ScenarioRef) -> Scenario:
    if (ref.scenario is None) == (ref.fixture is None):
        raise HTTPException(status_code=422,
                            detail="give exactly one of 'scenario' or 'fixture'")
    try:
        sc = parse_scenario(ref.scenario) if ref.scenario is not None \
            else load_fixture(ref.fixture)
    except ScenarioError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    if ref.seed is not None:
        sc = sc.model_copy(update={"seed": ref.seed})
    return sc


def _kkt(res) -> S.KktInfo:
    return S.KktInfo(status=res.status, iterations=res.iterations,
                     polish_iterations=res.polish_iterations,
                     stationarity=res.stationarity, feasibility=res.feasibility,
                     complementarity=res.complementarity)


def _payload(sol) -> S.TrajectoryPayload:
    return S.TrajectoryPayload(times=sol.times.tolist(),
                               states=sol.states.tolist(),
                               controls=sol.controls.tolist())


def parking_curb_obstacles(clearance: float = 0.1):
    """Certificate fixture for the parking bay walls.

    Plateau boxes eroded by `clearance`: the maneuver's path constraints act
    on the right wheel line, so the body outline may shave the curb corner
    by a few centimeters; the erosion absorbs that formulation gap.
    """
    c = clearance
    parts = [collision.ConvexPolyhedron.from_box(2.5 + c, 12.0, -3.0 + c, -c),
             collision.ConvexPolyhedron.from_box(-12.0, -2.5 - c, -3.0 + c, -c),
             collision.ConvexPolyhedron.from_box(-12.0, 12.0, -3.8, -3.0 - c)]
    return [collision.Obstacle(parts=(p,)) for p in parts]


def create_app() -> FastAPI:
    app = FastAPI(title="roadplan", version=__version__,
                  description="Optimization-based motion planning for "
                              "autonomous ground vehicles")

    @app.exception_handler(RoadplanError)
    async def _roadplan_error(request, exc):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/scenario/echo", response_model=S.EchoResponse)
    def scenario_echo(req: S.ScenarioRef):
        sc = _resolve_scenario(req)
        return S.EchoResponse(scenario=sc.model_dump(mode="json"))

    @app.post("/plan/grid", response_model=S.GridPlanResponse)
    def plan_grid(req: S.GridPlanRequest):
        sc = _resolve_scenario(req)
        if sc.planner is None or sc.planner.grid is None:
            raise HTTPException(422, "scenario lacks planner.grid settings")
        g = sc.planner.grid
        cfg = graphplan.GridConfig(g.x_min, g.x_max, g.y_min, g.y_max, g.n_x, g.n_y)
        obstacles = sc.build_obstacles()
        try:
            plan = graphplan.grid_plan(cfg, obstacles, sc.planner.start[:2],
                                       sc.planner.goal)
        except (NoPath, StartOrGoalBlocked) as exc:
            raise HTTPException(409, str(exc)) from exc
        thinned = geometry.thin(plan.waypoints, sc.planner.thin_tolerance)
        spline = geometry.interpolate(thinned)
        return S.GridPlanResponse(waypoints=[tuple(p) for p in plan.waypoints],
                                  cost=plan.cost, expanded=plan.expanded,
                                  thinned=[tuple(p) for p in thinned],
                                  spline_length=spline.length)

    @app.post("/plan/lattice", response_model=S.LatticePlanResponse)
    def plan_lattice(req: S.LatticePlanRequest):
        sc = _resolve_scenario(req)
        if sc.planner is None or sc.planner.lattice is None:
            raise HTTPException(422, "scenario lacks planner.lattice settings")
        lt = sc.planner.lattice
        cfg = graphplan.LatticeConfig(
            x_min=lt.x_min, x_max=lt.x_max, y_min=lt.y_min, y_max=lt.y_max,
            cell_xy=lt.cell_xy, cell_psi=lt.cell_psi, n_v=lt.n_v,
            n_delta=lt.n_delta, step=lt.step, goal_tol=lt.goal_tol)
        params = (sc.vehicles[0].params.build() if sc.vehicles
                  else VehicleParams(wheelbase=2.7, width=1.8, v_min=0.0,
                                     v_max=10.0))
        try:
            plan = graphplan.lattice_plan(cfg, params, sc.build_obstacles(),
                                          sc.planner.start, sc.planner.goal)
        except (NoPath, StartOrGoalBlocked) as exc:
            raise HTTPException(409, str(exc)) from exc
        max_steer = float(np.max(np.abs(plan.controls[:, 1]))) if len(plan.controls) else 0.0
        return S.LatticePlanResponse(states=[tuple(p) for p in plan.waypoints],
                                     controls=[tuple(c) for c in plan.controls],
                                     cost=plan.cost, expanded=plan.expanded,
                                     max_steer=max_steer)

    @app.post("/solve/parking", response_model=S.ParkingResponse)
    def solve_parking(req: S.ParkingRequest):
        sol, nlp, res = ocp.problems.solve_parking(n_final=req.n_nodes,
                                                   scheme=req.scheme)
        params = VehicleParams(wheelbase=2.7, width=1.8)
        rep = collision.trajectory_clear(sol.times, sol.states, params,
                                         parking_curb_obstacles(), eps=1e-3,
                                         refine=2)
        return S.ParkingResponse(tf=sol.tf, objective=sol.objective,
                                 trajectory=_payload(sol), kkt=_kkt(res),
                                 curb_clear=rep.clear, worst_zeta=rep.worst_zeta)

    @app.post("/solve/avoidance", response_model=S.AvoidanceResponse)
    def solve_avoidance(req: S.AvoidanceRequest):
        sol, nlp, res = ocp.problems.solve_avoidance(
            p=(req.p1, req.p2), n_final=req.n_nodes, scheme=req.scheme)
        a = sol.controls[:, 1]
        frac = float(np.mean(np.abs(a + 10.0) < 1e-6))
        return S.AvoidanceResponse(d=float(sol.statics[0]), tf=sol.tf,
                                   objective=sol.objective,
                                   accel_lower_bound_fraction=frac,
                                   trajectory=_payload(sol), kkt=_kkt(res))

    @app.post("/solve/sensitivity", response_model=S.SensitivityResponse)
    def solve_sensitivity(req: S.SensitivityRequest):
        sol, nlp, res = ocp.problems.solve_avoidance(n_final=req.n_nodes,
                                                     scheme=req.scheme)
        sens = ocp.sensitivities(nlp, res)
        probes = []
        for p in ((0.05, 0.0), (-0.05, 0.0), (0.0, 0.05), (0.0, -0.05)):
            pred = ocp.taylor_update(sol, sens, p)
            probes.append(S.TaylorProbe(p=p, predicted_d=float(pred.statics[0]),
                                        predicted_tf=pred.tf))
        return S.SensitivityResponse(
            d=float(sol.statics[0]), tf=sol.tf,
            dtf_dp=tuple(sens.dtf_dp), dd_dp=tuple(sens.dstatics_dp[0]),
            taylor=probes)

    @app.post("/mpc/run", response_model=S.MpcResponse)
    def mpc_run(req: S.MpcRequest):
        sc = _resolve_scenario(req)
        result = fleet.run_scenario(sc.build_fleet())
        return S.MpcResponse(
            times=result.times.tolist(),
            trajectories={vid: tr.tolist() for vid, tr in result.trajectories.items()},
            logs=[S.RoundLogRow(round=l.round, t=l.t, vehicle=l.vid,
                                solve_status=l.solve_status,
                                priority_rank=l.priority_rank,
                                min_ellipse_value=(l.min_ellipse_value
                                                   if math.isfinite(l.min_ellipse_value)
                                                   else 1e30))
                  for l in result.logs],
            reached=result.reached,
            min_pair_clearance=(result.min_pair_clearance
                                if math.isfinite(result.min_pair_clearance) else 1e30))

    @app.post("/track/run", response_model=S.TrackResponse)
    def track_run(req: S.TrackRequest):
        sc = _resolve_scenario(req)
        if sc.tracking is None:
            raise HTTPException(422, "scenario lacks tracking settings")
        ts = sc.tracking
        track = sc.build_track()
        gains = tracking.Gains(*(req.gains if req.gains else ts.gains))
        if req.offset_initial is not None:
            start = np.array([req.offset_initial[0], req.offset_initial[1],
                              track.start_state()[2]])
        elif ts.initial is not None:
            start = np.asarray(ts.initial, dtype=float)
        else:
            start = track.start_state()
        noise = None
        if req.with_noise and ts.noise is not None:
            noise = tracking.NoiseSpec(position=tuple(ts.noise.position),
                                       velocity=tuple(ts.noise.velocity),
                                       seed=sc.seed)
        run = tracking.closed_loop(track, start, gains, ts.wheelbase, noise=noise,
                                   rate=ts.rate,
                                   duration=req.duration or ts.duration,
                                   velocity_estimate=ts.velocity_estimate)
        stab = tracking.stability_check(gains)
        max_real = -math.inf
        for t in np.linspace(0.1, track.duration - 0.1, 50):
            _, vel, acc = track.at(t)
            A = tracking.linearized_matrix(vel, acc, gains, ts.wheelbase)
            max_real = max(max_real, float(np.max(np.real(np.linalg.eigvals(A)))))
        return S.TrackResponse(times=run.times.tolist(), states=run.states.tolist(),
                               ref_positions=run.ref_positions.tolist(),
                               errors=run.errors.tolist(),
                               max_error=float(np.max(run.errors)),
                               final_error=float(run.errors[-1]),
                               stable=stab.stable, eigenvalue_max_real=max_real)

    return app


app = create_app()
