"""Command-line interface for headless batch runs and the live service.

Subcommands:
  demo record|list      scripted-teacher recording, primitive store listing
  run                   execute a task program at a board pose, CSV report
  localize              run the localization pipeline (with ablations)
  bench tableI|tableII|spiral|localization
  serve                 WebSocket session service
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benches
from .primitives import Primitive, load_primitive_dir
from .se3 import Pose, quat_from_axis_angle
from .session import Session, SessionConfig, TeachCommand


def _parse_pose(text: str) -> Pose | None:
    """'reference' or 'x,y,yaw_deg' into a board pose."""
    if text == "reference":
        return None
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError("pose must be 'reference' or 'x_m,y_m,yaw_deg'")
    return Pose(np.array([parts[0], parts[1], 0.0]),
                quat_from_axis_angle(np.array([0.0, 0.0, 1.0]),
                                     np.radians(parts[2])))


def cmd_demo(args) -> int:
    store = Path(args.store)
    store.mkdir(parents=True, exist_ok=True)
    if args.action == "list":
        prims = load_primitive_dir(store)
        if not prims:
            print("no primitives stored")
        for name, p in prims.items():
            flag = "insertion" if p.insertion else "free"
            print(f"{name:24s} {len(p.trajectory):5d} samples  "
                  f"{p.trajectory.duration_s:6.2f} s  {flag}")
        return 0
    # record: drive a kinesthetic session from a command script
    script = json.loads(Path(args.script).read_text())
    session = Session(SessionConfig(seed=args.seed))
    session.capture_reference()
    session.run_script(script)
    saved = 0
    for name, prim in session.primitives.items():
        prim.save(store)
        saved += 1
        print(f"saved {name} ({len(prim.trajectory)} samples)")
    if saved == 0:
        print("script saved no primitives", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    session = Session(SessionConfig(seed=args.seed,
                                    halt_on_failure=args.halt_on_failure))
    session.capture_reference()
    if args.primitives:
        prims = load_primitive_dir(args.primitives)
        session.adopt_primitives(list(prims.values()))
    else:
        from .scenarios import default_task_program
        session.adopt_primitives(default_task_program(session.world))
    program = json.loads(Path(args.program).read_text())["primitives"] \
        if args.program else list(session.active_primitives)

    pose = _parse_pose(args.pose)
    rows = []
    for trial in range(args.trials):
        s = Session(SessionConfig(seed=args.seed + trial,
                                  halt_on_failure=args.halt_on_failure))
        s.capture_reference()
        s.adopt_primitives([p.copy() for p in session.primitives.values()])
        if pose is not None:
            s.submit(TeachCommand("set_board_pose", {"pose": pose.to_dict()}))
            s.tick()
            s.run_localization_pipeline()
        report = s.run_task_program(program)
        for r in report.results:
            rows.append(r.row(args.pose, trial))
            mark = "ok" if r.success else f"FAIL({r.failure_cause})"
            print(f"trial {trial} {r.primitive:24s} {mark}")
    if args.report:
        res = benches.BenchResult("run", rows)
        res.write_csv(args.report)
        print(f"report written to {args.report}")
    return 0 if all(r["success"] for r in rows) else 1


def cmd_localize(args) -> int:
    session = Session(SessionConfig(seed=args.seed))
    session.capture_reference()
    pose = _parse_pose(args.pose)
    if pose is not None:
        session.submit(TeachCommand("set_board_pose", {"pose": pose.to_dict()}))
        session.tick()
    est = session.run_localization_pipeline(ablate_icp=args.ablate_icp,
                                            ablate_haptic=args.ablate_haptic)
    truth = session.world.board_pose
    for stage in ("reference", "visual", "haptic"):
        if stage not in session.estimates:
            continue
        t = session.estimates[stage]
        err = np.linalg.norm(t.translation[:2] - truth.position[:2])
        print(f"{stage:10s} translation error {err * 1000:7.3f} mm")
    print(f"final estimate: {est.translation.round(5).tolist()}")
    return 0


def cmd_bench(args) -> int:
    if args.which == "tableI":
        result = benches.bench_table1(n_trials=args.trials or 5, seed=args.seed)
    elif args.which == "tableII":
        result = benches.bench_ablation(n_trials=args.trials or 25,
                                        seed=args.seed)
    elif args.which == "spiral":
        result = benches.bench_spiral_insertion(n_trials=args.trials or 100,
                                                seed=args.seed)
    elif args.which == "localization":
        result = benches.bench_localization(n_scenes=args.trials or 50,
                                            seed=args.seed)
    else:
        raise ValueError(args.which)
    print(json.dumps(result.stats, indent=2, sort_keys=True))
    if args.report:
        result.write_csv(args.report)
        print(f"report written to {args.report}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import build_app
    session = Session(SessionConfig(seed=args.seed))
    session.capture_reference()
    from .scenarios import default_task_program
    session.adopt_primitives(default_task_program(session.world))
    app = build_app(session, realtime=not args.fast)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teacharm",
                                description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    demo = sub.add_parser("demo", help="record or list demonstrations")
    demo.add_argument("action", choices=["record", "list"])
    demo.add_argument("--script", help="command script JSON (record)")
    demo.add_argument("--store", default="primitives",
                      help="primitive store directory")
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(fn=cmd_demo)

    run = sub.add_parser("run", help="execute a task program")
    run.add_argument("--program", help="task program JSON file")
    run.add_argument("--primitives", help="primitive store directory")
    run.add_argument("--pose", default="reference",
                     help="'reference' or x_m,y_m,yaw_deg")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--report", help="CSV report path")
    run.add_argument("--halt-on-failure", action="store_true")
    run.set_defaults(fn=cmd_run)

    loc = sub.add_parser("localize", help="board localization pipeline")
    loc.add_argument("--pose", default="reference")
    loc.add_argument("--seed", type=int, default=0)
    loc.add_argument("--ablate-haptic", action="store_true",
                     help="stop at the visual estimate")
    loc.add_argument("--ablate-icp", action="store_true",
                     help="probe from the stale reference estimate")
    loc.set_defaults(fn=cmd_localize)

    bench = sub.add_parser("bench", help="benchmark scenarios")
    bench.add_argument("which",
                       choices=["tableI", "tableII", "spiral", "localization"])
    bench.add_argument("--trials", type=int)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--report", help="CSV report path")
    bench.set_defaults(fn=cmd_bench)

    serve = sub.add_parser("serve", help="WebSocket session service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--fast", action="store_true",
                       help="run the loop as fast as possible (no wall clock)")
    serve.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # Bench seeds default to each scenario's pinned seed unless overridden.
    if args.command == "bench" and args.seed == 0:
        args.seed = {"tableI": 99, "tableII": 777, "spiral": 2024,
                     "localization": 555}[args.which]
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
