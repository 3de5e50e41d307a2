"""HTTP front end: one POST endpoint per experiment command.

Domain validation failures (detailed balance, reducibility, bad
expressions, out-of-window times) surface as 422s with the message in
`detail`, matching the shape FastAPI uses for schema errors, so clients
need a single error path.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import (IdentityRequest, KatoRequest, SpectralRequest,
                      TruncationRequest)
from ..runner import (run_identity, run_kato, run_spectral, run_truncation,
                      run_validate)
from .schemas import CommandResponse, HealthResponse, ValidateRequest


def create_app():
    app = FastAPI(title="fklab", version=__version__)

    @app.exception_handler(ValueError)
    async def _domain_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422,
            content={"detail": [{"type": type(exc).__name__, "msg": str(exc)}]},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/spectral", response_model=CommandResponse)
    def spectral(req: SpectralRequest):
        return CommandResponse(**run_spectral(req))

    @app.post("/identity-check", response_model=CommandResponse)
    def identity_check(req: IdentityRequest):
        return CommandResponse(**run_identity(req))

    @app.post("/kato", response_model=CommandResponse)
    def kato_certify(req: KatoRequest):
        return CommandResponse(**run_kato(req))

    @app.post("/truncation-study", response_model=CommandResponse)
    def truncation_study(req: TruncationRequest):
        return CommandResponse(**run_truncation(req))

    @app.post("/model/validate", response_model=CommandResponse)
    def validate_model(req: ValidateRequest):
        return CommandResponse(**run_validate(req.model))

    return app
