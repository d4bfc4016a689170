import math
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


def is_infinite(value: float) -> bool:
    return math.isinf(value)


class SecRow(BaseModel):
    """Single-exposure correction metrics for one input image"""

    scene_id: str
    ev: Optional[float] = None
    psnr: float = Field(description="dB, or inf when the images are identical")
    ssim: float


class MefRow(BaseModel):
    """Fused-output metrics for one scene"""

    scene_id: str
    method: str = "model"
    psnr: float
    ssim: float


class MetricMean(BaseModel):
    psnr: Optional[float] = Field(None, description="Mean over finite PSNR values")
    ssim: Optional[float] = None
    count: int = 0
    infinite_count: int = Field(0, description="Rows left out of the PSNR mean")


def mean_of(psnrs: List[float], ssims: List[float]) -> MetricMean:
    finite = [p for p in psnrs if not is_infinite(p)]
    return MetricMean(
        psnr=math.fsum(finite) / len(finite) if finite else None,
        ssim=math.fsum(ssims) / len(ssims) if ssims else None,
        count=len(ssims),
        infinite_count=len(psnrs) - len(finite),
    )


class EvalReport(BaseModel):
    sec_rows: List[SecRow] = Field(default_factory=list)
    mef_rows: List[MefRow] = Field(default_factory=list)

    @property
    def sec_mean(self) -> MetricMean:
        return mean_of([r.psnr for r in self.sec_rows], [r.ssim for r in self.sec_rows])

    def mef_mean(self, method: str = "model") -> MetricMean:
        rows = [r for r in self.mef_rows if r.method == method]
        return mean_of([r.psnr for r in rows], [r.ssim for r in rows])

    @property
    def per_ev(self) -> Dict[float, MetricMean]:
        groups: Dict[float, List[SecRow]] = {}
        for row in self.sec_rows:
            if row.ev is not None:
                groups.setdefault(row.ev, []).append(row)
        return {
            ev: mean_of([r.psnr for r in rows], [r.ssim for r in rows])
            for ev, rows in sorted(groups.items())
        }

    @property
    def mef_methods(self) -> List[str]:
        seen: List[str] = []
        for row in self.mef_rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen


class AblationRow(BaseModel):
    setting: str
    sec_psnr: Optional[float] = None
    sec_ssim: Optional[float] = None
    mef_psnr: Optional[float] = None
    mef_ssim: Optional[float] = None
    heldout_lumi: Optional[float] = Field(None, description="Mean ranking loss on held-out scenes")


class AblationReport(BaseModel):
    rows: List[AblationRow] = Field(default_factory=list)

    def row(self, setting: str) -> AblationRow:
        for row in self.rows:
            if row.setting == setting:
                return row
        raise KeyError(setting)
