"""
Phantom manifests: scans of test objects with known molar composition.
"""

from typing import Dict, List, Sequence

from pydantic import BaseModel, Field, field_validator

from src.core.exceptions import DegenerateSampleError


class PhantomEntry(BaseModel):
    path: str = Field(..., min_length=1)
    concentrations_mm: Dict[str, float]

    @field_validator("concentrations_mm")
    @classmethod
    def _non_negative(cls, value: Dict[str, float]) -> Dict[str, float]:
        if any(v < 0.0 for v in value.values()):
            raise ValueError("molar concentrations must be non-negative")
        return value

    def relative(self, metabolites: Sequence[str]) -> Dict[str, float]:
        """Molarities divided by their sum over `metabolites` (missing ones count as 0)."""
        values = {m: float(self.concentrations_mm.get(m, 0.0)) for m in metabolites}
        total = sum(values.values())
        if total <= 0.0:
            raise DegenerateSampleError(f"Phantom {self.path} contains none of {list(metabolites)}")
        return {m: v / total for m, v in values.items()}


class PhantomManifest(BaseModel):
    series: str = Field(..., min_length=1)
    entries: List[PhantomEntry] = Field(..., min_length=1)


def _series(name: str, fixed: Dict[str, float], gaba: Sequence[float]) -> List[PhantomEntry]:
    return [
        PhantomEntry(
            path=f"{name}/{name}_{i:02d}.mrsscan",
            concentrations_mm={**fixed, "GABA": value},
        )
        for i, value in enumerate(gaba, start=1)
    ]


def default_phantom_series() -> List[PhantomManifest]:
    """
    Compositions (mM) of the E1, E3 and E4 calibration series as
    manifest templates; scan paths are placeholders relative to the manifest.
    """
    e1_gaba = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 10.0, 11.6)
    e1 = _series("E1", {"NAA": 15.0, "Cr": 0.0, "Glu": 0.0, "Gln": 0.0}, e1_gaba)
    # the thirteenth E1 scan adds creatine to the GABA-free phantom
    e1.append(
        PhantomEntry(
            path="E1/E1_13.mrsscan",
            concentrations_mm={"NAA": 15.0, "Cr": 8.0, "Glu": 0.0, "Gln": 0.0, "GABA": 0.0},
        )
    )
    mixed = {"NAA": 15.0, "Cr": 8.0, "Glu": 12.0, "Gln": 3.0}
    e3 = _series("E3", mixed, [float(v) for v in range(15)])
    e4 = _series("E4", mixed, (0.0, 1.5, 3.0, 5.0, 7.0, 10.0))
    return [
        PhantomManifest(series="E1", entries=e1),
        PhantomManifest(series="E3", entries=e3),
        PhantomManifest(series="E4", entries=e4),
    ]
