"""
Centralized store instances for mrsquant.
Ensures single, shared instances of the archive stores.
"""

from src.infrastructure.storage.basis_store import BasisStore
from src.infrastructure.storage.checkpoint_store import CheckpointStore
from src.infrastructure.storage.dataset_store import DatasetStore
from src.infrastructure.storage.scan_store import ScanStore

# Single shared instances
basis_store = BasisStore()
dataset_store = DatasetStore()
checkpoint_store = CheckpointStore()
scan_store = ScanStore()
