"""
FastAPI middleware recording request metrics for the quantification service.
"""

import time
from typing import Awaitable, Callable, FrozenSet

from fastapi import Request, Response
from starlette.routing import Match

from shared.libs.observability.metrics import (
    ACTIVE_REQUESTS,
    EXCEPTION_COUNT,
    REQUEST_COUNT,
    REQUEST_DURATION,
)

UNMATCHED = "unmatched"
UNTRACKED_PATHS: FrozenSet[str] = frozenset({"/metrics"})


def route_label(request: Request) -> str:
    """Route template serving the request; unknown paths share one label."""
    for route in request.app.router.routes:
        match, _ = route.matches(request.scope)
        if match == Match.FULL:
            return getattr(route, "path", UNMATCHED)
    return UNMATCHED


async def metrics_middleware(
    request: Request, call_next: Callable[..., Awaitable[Response]]
) -> Response:
    """
    Count, time and track in-flight requests per method and route.
    Prometheus scrapes of /metrics are not recorded.
    """
    if request.url.path in UNTRACKED_PATHS:
        return await call_next(request)

    method = request.method
    endpoint = route_label(request)
    ACTIVE_REQUESTS.labels(method=method, endpoint=endpoint).inc()
    start_time = time.perf_counter()
    status_code = 500
    try:
        response = await call_next(request)
        status_code = response.status_code
        return response
    except Exception as e:
        EXCEPTION_COUNT.labels(
            exception_type=type(e).__name__, method=method, endpoint=endpoint
        ).inc()
        raise
    finally:
        ACTIVE_REQUESTS.labels(method=method, endpoint=endpoint).dec()
        REQUEST_COUNT.labels(method=method, endpoint=endpoint, status=str(status_code)).inc()
        REQUEST_DURATION.labels(method=method, endpoint=endpoint).observe(
            time.perf_counter() - start_time
        )
