import asyncio
import json
import logging
from datetime import datetime
import httpx
import numpy as np
from fastapi import BackgroundTasks, FastAPI, File, HTTPException, UploadFile
from sse_starlette.sse import EventSourceResponse

from app.config import configure_logging, get_settings
from app.errors import ConsensusError, GammaBoundError, GraphFormatError
from app.models import (
    CheckReport,
    DelaySweepRequest,
    ExperimentRequest,
    GammaSweepRequest,
    GraphInfo,
    GraphUploadResponse,
    HealthResponse,
    MonteCarloSummary,
    RunSummary,
    SweepTable,
)
from app.services.check_service import CheckService
from app.services.experiment_service import ExperimentService
from app.services.graph_service import Digraph, graph_info, parse_edge_text
from app.services.spectral_service import mean_gap_vs_delay, sweep_gamma
from app.utils.db import db

configure_logging()
logger = logging.getLogger(__name__)

VERSION = "1.0.0"

app = FastAPI(
    title="Delay-Robust Consensus Lab",
    description="Push-pull average consensus over delay-prone digraphs: simulation, spectra, Monte Carlo",
    version=VERSION,
)

experiment_service = ExperimentService()


def _graph_or_404(graph_id: str) -> Digraph:
    record = db.get_graph(graph_id)
    if not record:
        raise HTTPException(status_code=404, detail="Graph not found")
    return record["graph"]


def _bad_request(e: ConsensusError) -> HTTPException:
    return HTTPException(status_code=400, detail=str(e))


#  ENDPOINTS

@app.get("/", tags=["Root"])
async def root():
    """Root endpoint"""
    return {
        "message": "Delay-Robust Consensus Lab",
        "version": VERSION,
        "docs": "/docs",
        "health": "/healthz",
    }


@app.post("/graphs", response_model=GraphUploadResponse, tags=["Graphs"])
async def upload_graph(file: UploadFile = File(...)):
    """
    Upload an edge-list file ("n=<count>" header, then "<sender> <receiver>" lines)
    """
    content = await file.read()
    try:
        text = content.decode("utf-8")
        g = parse_edge_text(text, source=file.filename or "upload")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Edge list must be UTF-8 text")
    except GraphFormatError as e:
        raise _bad_request(e)

    graph_id = db.store_graph(file.filename or "upload", text, g)
    info = graph_info(g)
    logger.info("Stored graph %s (%s): n=%d m=%d", graph_id, file.filename, info.n, info.m)
    if not info.strongly_connected:
        logger.warning("Graph %s is not strongly connected", graph_id)

    return GraphUploadResponse(
        graph_id=graph_id,
        message=f"Stored graph with {info.n} nodes and {info.m} links",
        info=info,
    )


@app.get("/graphs", tags=["Graphs"])
async def list_graphs():
    """List all uploaded graphs"""
    graphs = db.get_all_graphs()
    return {
        "total": len(graphs),
        "graphs": [
            {
                "id": record["id"],
                "name": record["name"],
                "uploaded_at": record["uploaded_at"],
                "n": record["graph"].n,
                "m": record["graph"].m,
            }
            for record in graphs
        ],
    }


@app.get("/graphs/{graph_id}", response_model=GraphInfo, tags=["Graphs"])
async def get_graph(graph_id: str):
    return graph_info(_graph_or_404(graph_id))


@app.post("/run", response_model=RunSummary, tags=["Simulation"])
async def run_scenario(request: ExperimentRequest):
    """
    Single run of the node-level protocol
    """
    g = _graph_or_404(request.graph_id)
    try:
        result = experiment_service.run_scenario(request.to_config(), graph=g)
    except ConsensusError as e:
        raise _bad_request(e)

    traj = result.trajectory
    summary = RunSummary(
        graph_id=request.graph_id,
        iterations=traj.iterations,
        average=traj.average,
        final_x=traj.x[-1].tolist(),
        final_s=traj.s[-1].tolist(),
        final_error=float(traj.error[-1]),
        converged_at=result.converged_at,
        error_curve=traj.error.tolist(),
    )
    db.store_result(request.graph_id, "run", summary.model_dump())
    return summary


@app.post("/mc", response_model=MonteCarloSummary, tags=["Simulation"])
async def monte_carlo(request: ExperimentRequest, background_tasks: BackgroundTasks):
    """
    Monte Carlo mean consensus error; run i uses seed + i
    """
    g = _graph_or_404(request.graph_id)
    try:
        curve = await asyncio.to_thread(experiment_service.monte_carlo, request.to_config(), g)
    except ConsensusError as e:
        raise _bad_request(e)

    summary = MonteCarloSummary(
        graph_id=request.graph_id,
        runs=curve.runs,
        final_error=curve.final,
        mean_error=curve.mean_error.tolist(),
    )
    result_id = db.store_result(request.graph_id, "mc", summary.model_dump())
    _queue_webhook(background_tasks, "mc.completed", request.graph_id, {"result_id": result_id, "final_error": curve.final})
    return summary


@app.get("/mc/stream", tags=["Simulation"])
async def monte_carlo_stream(graph_id: str, tau_bar: int = 0, gamma: float = 0.1, runs: int = 10,
                             iters: int = 300, seed: int = 0):
    """
    Stream per-run progress as server-sent events, then the mean curve
    """
    g = _graph_or_404(graph_id)
    try:
        cfg = ExperimentRequest(graph_id=graph_id, tau_bar=tau_bar, gamma=gamma, runs=runs,
                                iters=iters, seed=seed).to_config()
        experiment_service.check_gamma(cfg, g)
    except (ConsensusError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))

    async def event_generator():
        curves = []
        for run_index in range(cfg.runs):
            single = cfg.model_copy(update={"runs": 1, "seed": cfg.seed + run_index})
            errors = await asyncio.to_thread(experiment_service.run_curves, single, g)
            curves.append(errors[0])
            yield {"event": "run", "data": json.dumps({"run": run_index, "final_error": float(errors[0][-1])})}
        mean = np.stack(curves).mean(axis=0)
        yield {"event": "done", "data": json.dumps({"runs": len(curves), "final_error": float(mean[-1])})}

    return EventSourceResponse(event_generator())


@app.post("/spectral/gamma-sweep", response_model=SweepTable, tags=["Spectral"])
async def gamma_sweep(request: GammaSweepRequest):
    g = _graph_or_404(request.graph_id)
    table = await asyncio.to_thread(sweep_gamma, g, request.tau_bar, request.gammas, request.samples, request.seed)
    db.increment_metric("total_sweeps")
    return table


@app.post("/spectral/delay-sweep", response_model=SweepTable, tags=["Spectral"])
async def delay_sweep(request: DelaySweepRequest):
    g = _graph_or_404(request.graph_id)
    table = await asyncio.to_thread(mean_gap_vs_delay, g, request.gamma, request.tau_bars, request.samples, request.seed)
    db.increment_metric("total_sweeps")
    return table


@app.post("/check/{graph_id}", response_model=CheckReport, tags=["Validation"])
async def check_invariants(graph_id: str, tau_bar: int = 2, gamma: float = 0.1, seed: int = 0,
                           iters: int = 300, force_gamma: bool = False):
    """
    Run the invariant suite (stochasticity, conservation, cross-simulator equivalence, decomposition algebra)
    """
    g = _graph_or_404(graph_id)
    try:
        suite = CheckService(g, tau_bar, gamma, seed, iters, force_gamma)
        return await asyncio.to_thread(suite.run_suite)
    except ConsensusError as e:
        raise _bad_request(e)


async def send_webhook(url: str, data: dict):
    """Send webhook notification"""
    try:
        async with httpx.AsyncClient() as client:
            await client.post(url, json=data, timeout=5.0)
    except Exception as e:
        logger.warning("Webhook failed: %s", e)


def _queue_webhook(background_tasks: BackgroundTasks, event_type: str, graph_id: str, data: dict) -> dict:
    payload = {
        "event_type": event_type,
        "graph_id": graph_id,
        "timestamp": datetime.now().isoformat(),
        "data": data,
    }
    webhook_url = get_settings().webhook_url
    if webhook_url:
        background_tasks.add_task(send_webhook, webhook_url, payload)
    return payload


@app.post("/webhook/events", tags=["Webhooks"])
async def trigger_webhook_event(
    background_tasks: BackgroundTasks,
    event_type: str,
    graph_id: str,
    data: dict = None,
):
    """
    Trigger webhook event (for long-running experiments)
    """
    if not get_settings().webhook_url:
        return {"message": "Webhook URL not configured"}
    payload = _queue_webhook(background_tasks, event_type, graph_id, data or {})
    return {"message": "Webhook event queued", "payload": payload}


@app.get("/healthz", response_model=HealthResponse, tags=["Admin"])
async def health_check():
    """Health check endpoint"""
    return HealthResponse(
        status="healthy",
        timestamp=datetime.now().isoformat(),
        version=VERSION,
    )


@app.get("/metrics", tags=["Admin"])
async def get_metrics():
    """Get experiment counters"""
    return db.get_metrics()


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
