from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class FusionParams(BaseModel):
    """Parameters of the rule-based exposure fusion (the non-trainable lower level)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    exp_contrast: float = Field(1.0, ge=0.0, description="Exponent on the contrast measure")
    exp_saturation: float = Field(1.0, ge=0.0, description="Exponent on the saturation measure")
    exp_wellexposed: float = Field(1.0, ge=0.0, description="Exponent on well-exposedness")
    sigma_well: float = Field(0.2, gt=0.0, description="Gaussian width around mid-gray 0.5")
    eps_weight: float = Field(1e-12, gt=0.0, description="Floor added to every weight")
    levels: Optional[int] = Field(
        None, ge=1, description="Pyramid depth; None = floor(log2(min dim))"
    )
