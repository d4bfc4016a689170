from pydantic import BaseModel, ConfigDict, Field


class LossConfig(BaseModel):
    """Weights and constants of the composite training objective"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    w_p: float = Field(0.1, ge=0.0, description="Perceptual-proxy weight")
    w_ssim: float = Field(0.05, ge=0.0, description="Weight on (1 - SSIM)")
    w_lumi: float = Field(1.0, ge=0.0, description="Luminance ranking weight")
    margin: float = Field(0.05, ge=0.0, description="Ranking hinge margin")
    ssim_window: int = Field(8, ge=2, description="Side of the non-overlapping SSIM blocks")
    ssim_c1: float = Field(0.01**2, gt=0.0)
    ssim_c2: float = Field(0.03**2, gt=0.0)
    perceptual_seed: int = Field(7, description="Seed of the fixed filter bank")
