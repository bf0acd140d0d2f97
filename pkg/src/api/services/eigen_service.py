import logging
from typing import NamedTuple, Optional

import numpy as np

from core.config import settings
from core.exceptions import DomainError

logger = logging.getLogger(__name__)


class EigenResult(NamedTuple):
    values: np.ndarray
    vectors: Optional[np.ndarray]


class EigenService:
    """
    Циклический метод Якоби для небольших плотных симметричных матриц.

    Eigenvalues come back in ascending order; when vectors are requested,
    column j of `vectors` belongs to `values[j]`.
    """

    def __init__(self, tolerance: Optional[float] = None, max_sweeps: Optional[int] = None):
        config = settings.bmatrix_settings
        self.tolerance = tolerance if tolerance is not None else config.jacobi_tolerance
        self.max_sweeps = max_sweeps if max_sweeps is not None else config.jacobi_max_sweeps

    @staticmethod
    def _off_norm(a: np.ndarray) -> float:
        off = a - np.diag(np.diag(a))
        return float(np.sqrt(np.sum(off ** 2)))

    def _checked(self, matrix) -> np.ndarray:
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"Eigen decomposition needs a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("Matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        asymmetry = float(np.max(np.abs(a - a.T))) if a.size else 0.0
        if asymmetry > 1e-12 * scale:
            raise DomainError(f"Matrix is not symmetric (max |a_ij - a_ji| = {asymmetry:.3g})")
        return (a + a.T) / 2

    def eigen_sym(self, matrix, vectors: bool = False) -> EigenResult:
        a = self._checked(matrix)
        n = a.shape[0]
        v = np.eye(n) if vectors else None

        initial = self._off_norm(a)
        # ниже округления по норме Фробениуса сходимость недостижима
        target = max(self.tolerance * initial, np.finfo(float).eps * float(np.linalg.norm(a)))
        sweeps = 0
        while self._off_norm(a) > target:
            if sweeps >= self.max_sweeps:
                logger.warning(f"Jacobi stopped after {sweeps} sweeps, off-diagonal norm {self._off_norm(a):.3g}")
                break
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c

                    col_p, col_q = a[:, p].copy(), a[:, q].copy()
                    a[:, p] = c * col_p - s * col_q
                    a[:, q] = s * col_p + c * col_q
                    row_p, row_q = a[p, :].copy(), a[q, :].copy()
                    a[p, :] = c * row_p - s * row_q
                    a[q, :] = s * row_p + c * row_q
                    a[p, q] = a[q, p] = 0.0

                    if v is not None:
                        vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                        v[:, p] = c * vec_p - s * vec_q
                        v[:, q] = s * vec_p + c * vec_q

        values = np.diag(a).copy()
        order = np.argsort(values, kind='stable')
        logger.debug(f"Jacobi converged in {sweeps} sweeps for a {n}x{n} matrix")
        return EigenResult(values=values[order], vectors=v[:, order] if v is not None else None)

    def eigenvalues(self, matrix) -> np.ndarray:
        return self.eigen_sym(matrix).values


def get_eigen_service() -> EigenService:
    return EigenService()
