import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PopulationSpec(BaseModel):
    """
    Генератор потенциальных исходов: Y_i ~ N_K(theta_w, Sigma_w) для i из делянки w,
    Sigma_w = sigma2_w * ((1 - rho_w) I + rho_w J).
    """
    model_config = ConfigDict(frozen=True)

    theta: Tuple[Tuple[float, ...], ...] = Field(..., description="Mean vector per whole plot, treatments z1-major")
    sigma2: Tuple[float, ...] = Field(..., description="Variance per whole plot")
    rho: Tuple[float, ...] = Field(..., description="Equicorrelation per whole plot")
    enforce_wp_means: Optional[float] = Field(
        None, description="Target value forced onto every whole-plot contrast"
    )

    @model_validator(mode='after')
    def validate_population(self) -> 'PopulationSpec':
        n_plots = len(self.theta)
        if n_plots == 0 or len(self.sigma2) != n_plots or len(self.rho) != n_plots:
            raise ValueError('theta, sigma2 and rho must have one entry per whole plot')
        k = len(self.theta[0])
        if k < 2 or any(len(row) != k for row in self.theta):
            raise ValueError('every theta row must list the same number (>= 2) of treatments')
        for w, (s2, rho) in enumerate(zip(self.sigma2, self.rho)):
            if not s2 > 0:
                raise ValueError(f'sigma2 for whole plot {w} must be positive')
            if rho > 1 or 1 + (k - 1) * rho <= 0:
                raise ValueError(
                    f'whole plot {w}: rho={rho} gives a covariance that is not positive definite '
                    f'(need 1 + (K-1) rho > 0 and rho <= 1)'
                )
        if self.enforce_wp_means is not None and not math.isfinite(self.enforce_wp_means):
            raise ValueError('enforce_wp_means target must be finite')
        return self

    @property
    def n_plots(self) -> int:
        return len(self.theta)

    @property
    def n_treatments(self) -> int:
        return len(self.theta[0])

    def covariance(self, w: int) -> np.ndarray:
        k = self.n_treatments
        rho = self.rho[w]
        return self.sigma2[w] * ((1.0 - rho) * np.eye(k) + rho * np.ones((k, k)))
