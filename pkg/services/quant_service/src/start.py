import uvicorn

from src.config.config import config
from src.config.logger_config import log


def run(host: str = config.HTTP_HOST, port: int = config.HTTP_PORT) -> None:
    from src.main import app

    log.info("Starting quant-service on {}:{}", host, port)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    run()
