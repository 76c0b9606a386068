from fastapi import HTTPException, Request, status

from src.application.quantification_service import NetworkQuantifier


def get_quantifier(request: Request) -> NetworkQuantifier:
    """Dependency returning the quantifier loaded at startup."""
    quantifier = getattr(request.app.state, "quantifier", None)
    if quantifier is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No quantification model loaded",
        )
    return quantifier
