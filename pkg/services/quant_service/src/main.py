from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI

from src.application.quantification_service import NetworkQuantifier
from src.config.config import config
from src.config.logger_config import log
from src.core.exceptions import QuantError
from src.infrastructure.services import checkpoint_store
from src.interfaces.http.quantify import router as quantify_router
from shared.libs.observability.metrics import MODEL_LOADED, create_metrics_endpoint
from shared.libs.observability.middleware import metrics_middleware


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    FastAPI lifespan handler: runs on startup and shutdown.
    Loads the checkpoint at MODEL_PATH; the service starts without one and
    answers 503 on /quantify until a model is configured.
    """
    log.info("Starting quant-service initialization")
    app.state.quantifier = None
    MODEL_LOADED.set(0)

    if config.MODEL_PATH:
        try:
            net = checkpoint_store.load(config.MODEL_PATH)
            app.state.quantifier = NetworkQuantifier(net, name=Path(config.MODEL_PATH).stem)
            MODEL_LOADED.set(1)
            log.info("Model loaded", path=config.MODEL_PATH, metabolites=list(net.metabolites))
        except QuantError as e:
            log.error("Failed to load model", path=config.MODEL_PATH, error=e.message)
    else:
        log.warning("MODEL_PATH not set; /quantify is unavailable")

    yield

    app.state.quantifier = None
    MODEL_LOADED.set(0)
    log.info("quant-service shutdown complete")


app = FastAPI(
    title="quant-service",
    description="MEGA-PRESS metabolite quantification service",
    version="0.1.0",
    lifespan=lifespan,
)  # This is what Uvicorn needs to run


@app.get("/health")
async def health_check():
    """Health check endpoint for liveness probe."""
    loaded = getattr(app.state, "quantifier", None) is not None
    return {
        "status": "healthy",
        "model": "loaded" if loaded else "missing",
    }


app.middleware("http")(metrics_middleware)
app.include_router(quantify_router)
metrics_endpoint = create_metrics_endpoint()
app.add_api_route("/metrics", metrics_endpoint, name="metrics", include_in_schema=False)
