"""
HTTP front end over the experiment runners.

Runs execute in a worker thread; ``wait=true`` (the default) blocks until the
report exists. Artifacts live under ``<runs_root>/<run id>/`` unless the
request names an output directory and the app allows it.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from ..errors import ConfigError
from ..experiments.config import parse_config
from ..experiments.runners import run_experiment
from ..model import ModelParams, T0_squared, blowup_bounds_from, blowup_rate_exponent
from ..flows import FlowSpec, flow_condition
from .schemas import (
    BlowupBoundsRequest,
    BlowupBoundsResponse,
    FlowConditionRequest,
    FlowConditionResponse,
    Health,
    MetricOut,
    RunRequest,
    RunStatus,
    T0Request,
    T0Response,
)

VERSION = "0.1.0"


class RunStore:
    def __init__(self):
        self._runs: dict[str, RunStatus] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def new_id(self, name: str) -> str:
        with self._lock:
            return f"{name}-{next(self._ids):04d}"

    def put(self, status: RunStatus) -> None:
        with self._lock:
            self._runs[status.id] = status

    def get(self, run_id: str) -> RunStatus:
        with self._lock:
            if run_id not in self._runs:
                raise HTTPException(404, f"unknown run {run_id!r}")
            return self._runs[run_id]


def _params(p: float, **kw) -> ModelParams:
    try:
        return ModelParams(p=p, **kw)
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from exc


def create_app(runs_root: str | Path = "runs", allow_output_dir: bool = False, workers: int = 1) -> FastAPI:
    app = FastAPI(title="thinfilm", version=VERSION)
    root = Path(runs_root)
    store = RunStore()
    pool = ThreadPoolExecutor(max_workers=max(1, workers))
    app.state.store = store

    @app.get("/health", response_model=Health)
    def health():
        return Health(version=VERSION)

    @app.post("/runs", response_model=RunStatus)
    def submit(req: RunRequest):
        try:
            cfg = parse_config(req.config)
            cfg = cfg.with_overrides(kind=req.kind, seed=req.seed, n=req.n)
        except ConfigError as exc:
            raise HTTPException(422, str(exc)) from exc
        run_id = store.new_id(cfg.run_id)
        if req.output_dir is not None:
            if not allow_output_dir:
                raise HTTPException(403, "this server does not accept output_dir")
            base = Path(req.output_dir)
        else:
            base = root / run_id
        cfg = cfg.with_overrides(out=str(base))
        out = base / cfg.run_id
        status = RunStatus(id=run_id, experiment=cfg.experiment.kind, status="queued",
                           config_hash=cfg.config_hash, seed=cfg.seed, output_dir=str(out))
        store.put(status)

        def work():
            store.put(status.model_copy(update={"status": "running"}))
            try:
                rep = run_experiment(cfg)
            except Exception as exc:  # surfaced through the status record
                store.put(status.model_copy(update={"status": "error", "exit_code": 1,
                                                    "error": f"{type(exc).__name__}: {exc}"}))
                return
            metrics = [MetricOut(name=m.name, value=_jsonable(m.value), tolerance=m.tolerance,
                                 source=m.source, passed=m.passed) for m in rep.metrics]
            store.put(status.model_copy(update={
                "status": rep.status, "exit_code": rep.exit_code, "artifacts": list(rep.artifacts),
                "metrics": metrics, "error": rep.error}))

        fut = pool.submit(work)
        if req.wait:
            fut.result()
        return store.get(run_id)

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def get_run(run_id: str):
        return store.get(run_id)

    @app.get("/runs/{run_id}/artifacts/{name:path}")
    def artifact(run_id: str, name: str):
        st = store.get(run_id)
        if name not in st.artifacts:
            raise HTTPException(404, f"run {run_id!r} has no artifact {name!r}")
        path = Path(st.output_dir) / name
        if not path.is_file():
            raise HTTPException(404, f"artifact {name!r} missing on disk")
        return FileResponse(path)

    @app.post("/calc/t0_squared", response_model=T0Response)
    def calc_t0(req: T0Request):
        return T0Response(T0_squared=T0_squared(req.B, _params(req.p, A_p=req.A_p, mu=req.mu)))

    @app.post("/calc/flow_condition", response_model=FlowConditionResponse)
    def calc_flow(req: FlowConditionRequest):
        params = _params(req.p, A_p=req.A_p, C_T1=req.C_T1, mu=req.mu)
        # only |v|_inf enters the condition; a unit table flow carries it
        spec = FlowSpec("user_table", A=req.flow_linf, table=((0, 1.0, 0.0, 1.0),)) if req.flow_linf > 0 \
            else FlowSpec()
        fc = flow_condition(spec, req.u0_l2, params, req.tau_star)
        return FlowConditionResponse(T1=fc.T1, terms=fc.terms, lhs=fc.lhs, satisfied=fc.satisfied)

    @app.post("/calc/blowup_bounds", response_model=BlowupBoundsResponse)
    def calc_blowup(req: BlowupBoundsRequest):
        _params(req.p)
        b = blowup_bounds_from(req.l2, req.E, req.p)
        out = BlowupBoundsResponse(T_max_upper=b.T_max_upper, rate_exponent=blowup_rate_exponent(req.p))
        if b.T_max_upper is not None:
            t = np.linspace(0.0, b.T_max_upper, 11)[:-1]
            out.lower_curve_t = t.tolist()
            out.lower_curve = b.lower_curve(t).tolist()
        return out

    return app


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v
