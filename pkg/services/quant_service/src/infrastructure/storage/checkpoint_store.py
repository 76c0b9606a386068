from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import ValidationError

from src.application.nn.network import Network, build_network
from src.config.logger_config import log
from src.core.exceptions import FormatError, QuantError
from src.domain.models import InputConfig, NetworkConfig
from src.domain.results import TrainingHistory
from src.infrastructure.storage.archive import ArchiveCodec


class CheckpointStore:
    """
    Network checkpoints (magic "MRSNET1\\0"): architecture config, input config,
    per-layer descriptions, the training history and every parameter and
    batch-norm buffer as `layer.key` arrays. Round trips are bit-exact.
    """

    def __init__(self):
        self.codec = ArchiveCodec(b"MRSNET1\0", version=1)

    def save(
        self,
        net: Network,
        path: Union[str, Path],
        history: Optional[TrainingHistory] = None,
    ) -> Path:
        header = {
            "network": net.config.model_dump(mode="json"),
            "input": net.input_config.model_dump(mode="json") if net.input_config else None,
            "layers": [layer.describe() for layer in net.layers],
            "history": history.model_dump(mode="json") if history else None,
        }
        path = self.codec.write(path, header, net.state_dict())
        log.info("Checkpoint saved", path=str(path), parameters=net.parameter_count())
        return path

    def load_with_history(
        self, path: Union[str, Path]
    ) -> Tuple[Network, Optional[TrainingHistory]]:
        _, header, arrays = self.codec.read(path)
        try:
            cfg = NetworkConfig.model_validate(header["network"])
            input_cfg = (
                InputConfig.model_validate(header["input"]) if header.get("input") else None
            )
            history = (
                TrainingHistory.model_validate(header["history"])
                if header.get("history")
                else None
            )
            net = build_network(cfg, input_config=input_cfg)
            stored = [layer["name"] for layer in header["layers"]]
            built = [layer.name for layer in net.layers]
            if stored != built:
                raise FormatError(f"Checkpoint {path} layers do not match its configuration")
            net.load_state_dict(arrays)
        except FormatError:
            raise
        except (KeyError, TypeError, ValueError, ValidationError, QuantError) as e:
            raise FormatError(f"Checkpoint {path} is inconsistent: {e}") from e
        log.debug("Checkpoint loaded", path=str(path), layers=len(net.layers))
        return net, history

    def load(self, path: Union[str, Path]) -> Network:
        return self.load_with_history(path)[0]
