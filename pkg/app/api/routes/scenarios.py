"""
HomodyneQKD — Scenario Routes
Run scenarios and query the analytic QBER over HTTP.
"""
import asyncio
import logging
from typing import List

from fastapi import APIRouter, HTTPException, Query
from fastapi.concurrency import run_in_threadpool
from pydantic import ValidationError

from app.core.errors import ConfigError, SessionAborted
from app.schemas.schemas import ScenarioConfig, ScenarioRunResponse, TheoreticalQberResponse
from app.services import analysis
from app.services.scenarios import TRANSPORTS, bundled_scenarios, simulate_scenario

logger = logging.getLogger(__name__)
router = APIRouter()


def _run(cfg: ScenarioConfig, transport: str) -> ScenarioRunResponse:
    outcome = asyncio.run(simulate_scenario(cfg, transport=transport, include_slots=False))
    report = outcome.report
    peaks = analysis.peak_summary(outcome.records, outcome.frame.symbols)
    return ScenarioRunResponse(
        scenario=report.scenario,
        seed=report.seed,
        mode=report.mode,
        n_pulses=report.n_pulses,
        n_base_matched=report.n_base_matched,
        n_key_bits=report.n_key_bits,
        qber_estimate=report.qber_estimate,
        qber_theory=report.qber_theory,
        mu_eff=report.mu_eff,
        peaks=peaks.groups,
    )


@router.get(
    "/scenarios",
    response_model=List[str],
    summary="List bundled scenarios",
)
async def list_scenarios():
    return bundled_scenarios()


@router.post(
    "/scenarios/run",
    response_model=ScenarioRunResponse,
    summary="Run a scenario",
    description="Simulate one session and return the key and peak statistics. Nothing is written to disk.",
)
async def run_scenario_route(cfg: ScenarioConfig, transport: str = Query("queue")):
    if transport not in TRANSPORTS:
        raise HTTPException(status_code=422, detail=f"transport must be one of {list(TRANSPORTS)}")
    try:
        return await run_in_threadpool(_run, cfg, transport)
    except (ConfigError, ValidationError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SessionAborted as e:
        logger.warning(f"Scenario {cfg.name or '<inline>'} aborted: {e.reason}")
        raise HTTPException(status_code=409, detail=f"session aborted: {e.reason}")


@router.get(
    "/qber/theoretical",
    response_model=TheoreticalQberResponse,
    summary="Analytic QBER",
    description="Error rate of the sign decision for a Gaussian peak pair, with optional postselection threshold.",
)
async def theoretical_qber(
    mu_eff: float = Query(..., ge=0),
    sigma_sq: float = Query(1.0, gt=0),
    q0: float = Query(0.0, ge=0),
):
    qber, conclusive = analysis.theoretical_postselection(mu_eff, sigma_sq, q0)
    return TheoreticalQberResponse(
        mu_eff=mu_eff,
        sigma_sq=sigma_sq,
        threshold_q0=q0,
        qber=qber,
        conclusive_fraction=conclusive,
    )
