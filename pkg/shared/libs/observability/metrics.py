"""
Shared Prometheus metrics for mrsquant.
Used by the CLI (dumped beside each command's outputs) and the HTTP service.
"""

from pathlib import Path
from typing import Union

from fastapi import Response
from prometheus_client import (
    CONTENT_TYPE_LATEST,
    CollectorRegistry,
    Counter,
    Gauge,
    Histogram,
    generate_latest,
    write_to_textfile,
)

REGISTRY = CollectorRegistry(auto_describe=True)

# === HTTP METRICS ===
REQUEST_COUNT = Counter(
    "http_requests_total",
    "Total HTTP requests by method, endpoint, and status",
    ["method", "endpoint", "status"],
    registry=REGISTRY,
)

REQUEST_DURATION = Histogram(
    "http_request_duration_seconds",
    "Request duration in seconds",
    ["method", "endpoint"],
    # Custom buckets: 10ms to 10s
    buckets=[0.01, 0.05, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0],
    registry=REGISTRY,
)

ACTIVE_REQUESTS = Gauge(
    "http_active_requests",
    "Current active HTTP requests",
    ["method", "endpoint"],
    registry=REGISTRY,
)

EXCEPTION_COUNT = Counter(
    "http_exceptions_total",
    "Total number of exceptions raised by the service",
    ["exception_type", "method", "endpoint"],
    registry=REGISTRY,
)

# === PIPELINE METRICS ===
SAMPLES_SYNTHESIZED = Counter(
    "samples_synthesized_total",
    "Synthetic samples generated, by dataset split",
    ["split"],
    registry=REGISTRY,
)

B0_CORRECTIONS_SKIPPED = Counter(
    "b0_corrections_skipped_total",
    "Scans whose B0 correction was skipped for lack of a reference peak",
    registry=REGISTRY,
)

EPOCHS_TRAINED = Counter(
    "training_epochs_total",
    "Training epochs completed",
    registry=REGISTRY,
)

TRAINING_LOSS = Gauge(
    "training_loss",
    "Loss of the most recent epoch",
    ["phase"],
    registry=REGISTRY,
)

QUANTIFY_LATENCY = Histogram(
    "quantify_duration_seconds",
    "Time to quantify a single spectrum, pre-processing included",
    ["predictor"],
    buckets=[0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5],
    registry=REGISTRY,
)

QUANTIFICATIONS = Counter(
    "quantifications_total",
    "Spectra quantified, by predictor and outcome",
    ["predictor", "status"],
    registry=REGISTRY,
)

# === COMMAND METRICS ===
COMMAND_DURATION = Histogram(
    "command_duration_seconds",
    "Wall-clock duration of CLI commands",
    ["command"],
    buckets=[0.1, 1.0, 10.0, 60.0, 300.0, 900.0, 3600.0],
    registry=REGISTRY,
)

COMMAND_FAILURES = Counter(
    "command_failures_total",
    "CLI commands that ended with a nonzero exit code",
    ["command", "exit_code"],
    registry=REGISTRY,
)

# === SYSTEM METRICS ===
MODEL_LOADED = Gauge(
    "model_loaded",
    "Quantification model status (1=loaded, 0=missing)",
    registry=REGISTRY,
)


def write_metrics(path: Union[str, Path]) -> Path:
    """Dump the registry in the text exposition format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
    return path


def create_metrics_endpoint():
    """Create a /metrics endpoint for Prometheus."""

    async def metrics():
        return Response(content=generate_latest(REGISTRY), media_type=CONTENT_TYPE_LATEST)

    return metrics
