import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.exceptions import BMatrixExistenceError, ConstructionError, DomainError
from api.dto.bmatrix_dto import BMatrixDocument, VerificationReport
from api.services.eigen_service import EigenService
from api.services.outcomes_service import MatrixLike, as_square_matrix
from models.bmatrix_model import ASegment, BMatrix, Provenance

logger = logging.getLogger(__name__)

SignVector = Tuple[int, ...]

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0

B_MODES = ("balanced", "three", "naive", "minimax")


def _as_sizes(sizes: Sequence[int], minimum: int = 2) -> np.ndarray:
    values = np.asarray(list(sizes))
    if values.ndim != 1 or values.size < minimum:
        raise DomainError(f"At least {minimum} whole-plot sizes are required, got {values.size}")
    if not np.all(np.equal(np.mod(values, 1), 0)) or np.any(values < 1):
        raise DomainError(f"Whole-plot sizes must be positive integers, got {values.tolist()}")
    return values.astype(np.int64)


class BMatrixService:
    """
    Существование, построение и проверка корректирующей матрицы B.

    Every construction works on sizes sorted ascending and permutes the
    result back to the caller's whole-plot order at the boundary.
    Sign vectors are normalized so that their first component is +1.
    """

    def __init__(self, eigen_service: Optional[EigenService] = None):
        self.eigen_service = eigen_service or EigenService()
        self.config = settings.bmatrix_settings

    # ------------------------------------------------------------ existence

    def exists_b(self, sizes: Sequence[int]) -> bool:
        values = _as_sizes(sizes)
        if values.size < 3:
            raise DomainError(f"Existence of B is decided only for W >= 3 whole plots, got W={values.size}")
        largest = int(values.max())
        return largest < int(values.sum()) - largest

    def _require_existence(self, values: np.ndarray) -> None:
        if not self.exists_b(values):
            raise BMatrixExistenceError(values.tolist())

    def lambda_lower_bound(self, sizes: Sequence[int]) -> float:
        values = _as_sizes(sizes)
        return float(np.sum(values.astype(float) ** 2)) / (values.size - 1)

    # ------------------------------------------------------ closed forms

    def _finish(self, sorted_matrix: np.ndarray, order: np.ndarray, provenance: Provenance) -> BMatrix:
        inverse = np.argsort(order)
        matrix = sorted_matrix[np.ix_(inverse, inverse)]
        matrix = (matrix + matrix.T) / 2
        eigenvalues = self.eigen_service.eigenvalues(matrix)
        b = BMatrix.from_matrix(matrix, provenance, eigenvalues)
        bound = b.trace / (b.size - 1)
        if b.lambda_max < bound - 1e-9 * max(1.0, abs(bound)):
            raise ConstructionError(
                f"Largest eigenvalue {b.lambda_max!r} is below trace/(W-1) = {bound!r}"
            )
        return b

    def b_balanced(self, m: int, n_plots: int) -> BMatrix:
        if n_plots < 2:
            raise DomainError(f"Balanced B needs W >= 2, got {n_plots}")
        _as_sizes([m], minimum=1)
        square = float(m) ** 2
        matrix = np.full((n_plots, n_plots), -square / (n_plots - 1))
        np.fill_diagonal(matrix, square)
        return self._finish(matrix, np.arange(n_plots), Provenance(kind="balanced"))

    def b_three(self, m1: int, m2: int, m3: int) -> BMatrix:
        values = _as_sizes([m1, m2, m3], minimum=3)
        order = np.argsort(values, kind='stable')
        s1, s2, s3 = (float(v) ** 2 for v in values[order])
        if not self.exists_b(values):
            raise BMatrixExistenceError(values.tolist(), "no PSD completion for three whole plots")
        matrix = np.array([
            [s1, (s3 - s1 - s2) / 2, (s2 - s1 - s3) / 2],
            [(s3 - s2 - s1) / 2, s2, (s1 - s2 - s3) / 2],
            [(s2 - s3 - s1) / 2, (s1 - s3 - s2) / 2, s3],
        ])
        return self._finish(matrix, order, Provenance(kind="three_plot", sort_order=tuple(order.tolist())))

    def b_naive(self, sizes: Sequence[int]) -> Tuple[BMatrix, bool]:
        """Прямое обобщение формулы для W = 3; может оказаться не PSD"""
        values = _as_sizes(sizes, minimum=3)
        n_plots = values.size
        squares = values.astype(float) ** 2
        total = float(squares.sum())
        matrix = total / ((n_plots - 1) * (n_plots - 2)) - (squares[:, None] + squares[None, :]) / (n_plots - 2)
        np.fill_diagonal(matrix, squares)
        b = self._finish(matrix, np.arange(n_plots), Provenance(kind="naive_extension"))
        psd = b.eigenvalues[0] >= -self.config.zero_eigen_tolerance * b.trace
        if not psd:
            logger.info(f"Naive B for sizes {values.tolist()} has a negative eigenvalue {b.eigenvalues[0]!r}")
        return b, bool(psd)

    def explicit(self, entries: MatrixLike) -> BMatrix:
        """Матрица, заданная пользователем; только симметричность проверяется здесь"""
        matrix = as_square_matrix(entries)
        eigenvalues = self.eigen_service.eigenvalues(matrix)
        return BMatrix.from_matrix((matrix + matrix.T) / 2, Provenance(kind="explicit"), eigenvalues)

    def build(self, sizes: Sequence[int], mode: str) -> Tuple[BMatrix, Optional[bool]]:
        """B по имени способа; второй элемент заполнен только для naive"""
        values = _as_sizes(sizes)
        if mode == "minimax":
            return self.minimax_b(values), None
        if mode == "naive":
            return self.b_naive(values)
        if mode == "three":
            if values.size != 3:
                raise DomainError(f"Mode 'three' needs exactly 3 whole plots, got {values.size}")
            return self.b_three(*(int(v) for v in values)), None
        if mode == "balanced":
            if values.min() != values.max():
                raise DomainError("Balanced B requires equal whole-plot sizes")
            return self.b_balanced(int(values[0]), values.size), None
        raise DomainError(f"Unknown B mode '{mode}', expected one of {', '.join(B_MODES)}")

    # ------------------------------------------------------------- step 1

    @staticmethod
    def _sorted_sizes(sizes: Sequence[int]) -> np.ndarray:
        values = _as_sizes(sizes, minimum=3)
        if np.any(np.diff(values) < 0):
            raise DomainError(f"Sizes must be sorted ascending, got {values.tolist()}")
        if values[0] == values[-1]:
            raise DomainError("Sign vectors are defined only for unequal sizes; use the balanced matrix")
        return values

    def _constructive_sign_vector(self, values: np.ndarray) -> SignVector:
        """Один знаковый вектор через разбиение по h и w1 (размер не ограничен)"""
        n_plots = values.size
        largest = int(values[-1])
        x = np.zeros(n_plots - 1, dtype=int)

        h = 0
        while n_plots - 2 * (h + 1) >= 2 and values[n_plots - 2 * (h + 1) - 1] == largest:
            h += 1
        head = n_plots - 2 * h  # позиции 1..head-1 заполняются ниже
        if h >= 1:
            x[n_plots - h - 1:n_plots - 1] = 1
            x[head - 1:n_plots - h - 1] = -1

        if head == 2:
            x[0] = 1
        else:
            mu = values[:head - 1].astype(np.int64)
            prefix = np.cumsum(mu)
            total = int(prefix[-1])
            w1 = max(w for w in range(1, head - 1) if prefix[w - 1] <= total - prefix[w - 1])
            if w1 == head - 2:
                x[:head - 2] = -1
                x[head - 2] = 1
            elif abs(total - 2 * int(prefix[w1 - 1])) < largest:
                x[:w1] = -1
                x[w1:head - 1] = 1
            else:
                x[:w1 + 1] = -1
                x[w1 + 1:head - 1] = 1

        if x[0] < 0:
            x = -x
        witness = tuple(int(v) for v in x)
        if abs(int(values[:-1] @ x)) >= largest:
            raise ConstructionError(f"Constructive sign vector {witness} violates |mu'x| < M_W")
        return witness

    def _sign_matrix(self, values: np.ndarray) -> Tuple[np.ndarray, bool]:
        length = values.size - 1
        if length > self.config.exhaustive_sign_limit:
            logger.warning(
                f"W-1={length} exceeds the exhaustive sign-vector limit "
                f"{self.config.exhaustive_sign_limit}; minimax is best effort"
            )
            return np.array([self._constructive_sign_vector(values)], dtype=int), False

        # лексикографический порядок (-1 < +1), первая компонента фиксирована
        free = length - 1
        codes = np.arange(2 ** free, dtype=np.int64)
        shifts = np.arange(free - 1, -1, -1, dtype=np.int64)
        bits = (codes[:, None] >> shifts[None, :]) & 1
        xs = np.empty((codes.size, length), dtype=int)
        xs[:, 0] = 1
        xs[:, 1:] = 2 * bits - 1
        dots = xs @ values[:-1]
        return xs[np.abs(dots) < values[-1]], True

    def find_sign_vectors(self, sizes: Sequence[int]) -> List[SignVector]:
        values = self._sorted_sizes(sizes)
        xs, _ = self._sign_matrix(values)
        return [tuple(int(v) for v in row) for row in xs]

    # ------------------------------------------------------------- step 2

    def _segment_arrays(self, values: np.ndarray, xs: np.ndarray):
        mu = values[:-1].astype(float)
        mm = float(mu @ mu)
        phi1 = (xs @ mu) ** 2 - mm
        phi2 = float(mu.sum()) ** 2 - mm
        phi = float(values[-1]) ** 2 - mm
        margin = self.config.segment_margin

        n = xs.shape[0]
        start = np.zeros((n, 2))
        if phi < 0:
            start[:, 0] = phi / phi1
        elif phi > 0:
            start[:, 1] = phi / phi2
        end = np.empty((n, 2))
        end[:, 0] = ((1.0 - margin) * phi2 - phi) / (phi2 - phi1)
        end[:, 1] = 1.0 - margin - end[:, 0]

        if np.any(end < 0) or np.any(start.sum(axis=1) > 1.0 - margin):
            raise ConstructionError("Feasible (a1, a2) segment is empty inside the margin")
        return phi1, phi2, phi, start, end

    def solve_a_segment(self, x: Sequence[int], sizes: Sequence[int]) -> ASegment:
        values = self._sorted_sizes(sizes)
        vector = self._check_sign_vector(x, values)
        self._require_existence(values)
        phi1, phi2, phi, start, end = self._segment_arrays(values, vector[None, :])
        return ASegment(
            x=tuple(int(v) for v in vector),
            phi1=float(phi1[0]),
            phi2=phi2,
            phi=phi,
            start=(float(start[0, 0]), float(start[0, 1])),
            end=(float(end[0, 0]), float(end[0, 1])),
        )

    @staticmethod
    def _check_sign_vector(x: Sequence[int], values: np.ndarray) -> np.ndarray:
        vector = np.asarray(list(x))
        if vector.shape != (values.size - 1,) or not np.all(np.isin(vector, (-1, 1))):
            raise DomainError(f"Sign vector must have {values.size - 1} entries, each +1 or -1")
        dot = int(values[:-1] @ vector)
        if abs(dot) >= values[-1]:
            raise DomainError(f"Sign vector gives |mu'x| = {abs(dot)} >= M_W = {int(values[-1])}")
        return vector.astype(int)

    # ---------------------------------------------------------- steps 3-4

    @staticmethod
    def _batch_matrices(values: np.ndarray, xs: np.ndarray, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
        mu = values[:-1].astype(float)
        n, m = xs.shape
        x = xs.astype(float)
        inner = (
            a1[:, None, None] * np.einsum('ni,nj->nij', x, x)
            + a2[:, None, None]
            + (1.0 - a1 - a2)[:, None, None] * np.eye(m)
        )
        a = inner * np.outer(mu, mu)
        a = (a + np.swapaxes(a, 1, 2)) / 2
        ae = a.sum(axis=2)
        b = np.empty((n, m + 1, m + 1))
        b[:, :m, :m] = a
        b[:, :m, m] = -ae
        b[:, m, :m] = -ae
        b[:, m, m] = ae.sum(axis=1)
        return b

    def _assemble_sorted(self, x: np.ndarray, a1: float, a2: float, values: np.ndarray) -> np.ndarray:
        return self._batch_matrices(values, x[None, :], np.array([a1]), np.array([a2]))[0]

    def assemble_b(
            self,
            x: Sequence[int],
            a1: float,
            a2: float,
            sizes: Sequence[int],
            exhaustive: Optional[bool] = None,
            sort_order: Optional[Sequence[int]] = None
    ) -> BMatrix:
        """B = [[A, -Ae], [-e'A, e'Ae]] для отсортированных размеров; результат проверяется"""
        values = _as_sizes(sizes, minimum=3)
        vector = np.asarray(list(x), dtype=int)
        if vector.shape != (values.size - 1,):
            raise DomainError(f"Sign vector must have {values.size - 1} entries")
        matrix = self._assemble_sorted(vector, a1, a2, values)
        order = np.asarray(sort_order) if sort_order is not None else np.arange(values.size)
        provenance = Provenance(
            kind="constructed",
            x=tuple(int(v) for v in vector),
            a1=float(a1),
            a2=float(a2),
            exhaustive=exhaustive,
            sort_order=tuple(int(v) for v in order) if sort_order is not None else None,
        )
        b = self._finish(matrix, order, provenance)
        report = self.verify_c1_c2_c3(b, values[np.argsort(order)])
        if not report.passed:
            raise ConstructionError(f"Constructed B fails verification: {report.model_dump()}")
        return b

    def construct_steps(self, sizes: Sequence[int], x: Sequence[int], a1: float, a2: float) -> BMatrix:
        """Шаги 1–4 с заданными пользователем x и (a1, a2); x в порядке возрастания размеров"""
        values = _as_sizes(sizes, minimum=3)
        order = np.argsort(values, kind='stable')
        ordered = values[order]
        if ordered[0] == ordered[-1]:
            raise DomainError("All sizes are equal; use the balanced matrix")
        self._require_existence(values)
        vector = self._check_sign_vector(x, ordered)
        if a1 < 0 or a2 < 0 or a1 + a2 >= 1:
            raise DomainError(f"Need a1, a2 >= 0 and a1 + a2 < 1, got ({a1}, {a2})")
        phi1, phi2, phi, _, _ = self._segment_arrays(ordered, vector[None, :])
        residual = a1 * phi1[0] + a2 * phi2 - phi
        scale = max(1.0, abs(phi1[0]), abs(phi2), abs(phi))
        if abs(residual) > 1e-10 * scale:
            raise DomainError(
                f"(a1, a2) = ({a1}, {a2}) violate a1*phi1 + a2*phi2 = phi "
                f"(phi1={phi1[0]!r}, phi2={phi2!r}, phi={phi!r})"
            )
        return self.assemble_b(vector, a1, a2, ordered, sort_order=order)

    # -------------------------------------------------------- verification

    def verify_c1_c2_c3(self, b: MatrixLike, sizes: Sequence[int]) -> VerificationReport:
        matrix = as_square_matrix(b)
        values = _as_sizes(sizes)
        if matrix.shape != (values.size, values.size):
            raise DomainError(f"B is {matrix.shape[0]}x{matrix.shape[1]} but {values.size} sizes were given")
        squares = values.astype(float) ** 2
        entry_scale = float(squares.max())

        diagonal_error = float(np.max(np.abs(np.diag(matrix) - squares)))
        row_sums = float(np.max(np.abs(matrix.sum(axis=1))))
        eigenvalues = self.eigen_service.eigenvalues(matrix)
        trace = float(np.trace(matrix))
        scale = max(abs(trace), 1e-300)
        kernel_norm = float(np.linalg.norm(matrix @ np.ones(values.size)))

        return VerificationReport(
            diagonal_ok=diagonal_error <= 1e-9 * entry_scale,
            row_sums_ok=row_sums <= 1e-9 * entry_scale,
            psd_ok=bool(eigenvalues[0] >= -self.config.zero_eigen_tolerance * scale),
            rank_ok=bool(eigenvalues[1] > self.config.nonzero_eigen_tolerance * scale),
            kernel_ok=kernel_norm <= 1e-9 * scale,
            max_diagonal_error=diagonal_error,
            max_row_sum=row_sums,
            min_eigenvalue=float(eigenvalues[0]),
            second_smallest_eigenvalue=float(eigenvalues[1]),
            kernel_norm=kernel_norm,
            trace=trace,
        )

    # ------------------------------------------------------------- minimax

    @staticmethod
    def _lambda_max(matrices: np.ndarray) -> np.ndarray:
        return np.linalg.eigvalsh(matrices)[:, -1]

    def _profile(self, values: np.ndarray, xs: np.ndarray, start: np.ndarray, end: np.ndarray) -> Callable:
        def evaluate(t: np.ndarray) -> np.ndarray:
            a = start + t[:, None] * (end - start)
            a = np.maximum(a, 0.0)
            return self._lambda_max(self._batch_matrices(values, xs, a[:, 0], a[:, 1]))
        return evaluate

    def _golden(self, evaluate: Callable, n: int) -> Tuple[np.ndarray, np.ndarray]:
        # λ_max выпукла вдоль отрезка
        lo, hi = np.zeros(n), np.ones(n)
        c = hi - GOLDEN_RATIO * (hi - lo)
        d = lo + GOLDEN_RATIO * (hi - lo)
        fc, fd = evaluate(c), evaluate(d)
        for _ in range(self.config.golden_iterations):
            left = fc <= fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            next_c = np.where(left, hi - GOLDEN_RATIO * (hi - lo), d)
            next_d = np.where(left, c, lo + GOLDEN_RATIO * (hi - lo))
            trial = evaluate(np.where(left, next_c, next_d))
            fc, fd = np.where(left, trial, fd), np.where(left, fc, trial)
            c, d = next_c, next_d
        best = np.where(fc <= fd, c, d)
        return best, np.minimum(fc, fd)

    def _search_batch(self, values: np.ndarray, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Лучшее t и λ_max для каждого знакового вектора партии"""
        _, _, _, start, end = self._segment_arrays(values, xs)
        evaluate = self._profile(values, xs, start, end)
        n = xs.shape[0]
        golden_t, _ = self._golden(evaluate, n)

        # концы отрезка идут первыми: при равенстве выбирается конец
        columns = [np.zeros(n), np.ones(n), golden_t]
        step, points = self.config.polish_step, self.config.polish_points
        for k in range(-points, points + 1):
            if k:
                columns.append(np.clip(golden_t + k * step, 0.0, 1.0))
        ts = np.stack(columns, axis=1)
        lam = np.stack([evaluate(ts[:, j]) for j in range(ts.shape[1])], axis=1)
        best = lam.min(axis=1)
        tolerance = 1e-12 * np.maximum(np.abs(best), 1.0)
        pick = np.argmax(lam <= (best + tolerance)[:, None], axis=1)
        rows = np.arange(n)
        return ts[rows, pick], lam[rows, pick]

    def _representatives(self, values: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Один (лексикографически наименьший) x на класс перестановок внутри равных размеров"""
        _, groups = np.unique(values[:-1], return_inverse=True)
        one_hot = np.eye(groups.max() + 1, dtype=int)[groups]
        keys = xs @ one_hot
        nonzero = keys != 0
        first = np.argmax(nonzero, axis=1)
        signs = np.where(nonzero.any(axis=1), np.sign(keys[np.arange(len(keys)), first]), 1)
        keys = keys * signs[:, None]
        _, index = np.unique(keys, axis=0, return_index=True)
        return xs[np.sort(index)]

    def _rank_ok(self, values: np.ndarray, x: np.ndarray, a1: float, a2: float) -> bool:
        # запас x2 над порогом (c3): итоговая проверка идёт через Якоби, а не LAPACK
        matrix = self._assemble_sorted(x, a1, a2, values)
        eigenvalues = np.linalg.eigvalsh(matrix)
        return bool(eigenvalues[1] > 2.0 * self.config.nonzero_eigen_tolerance * np.trace(matrix))

    def _rank_safe_t(self, values: np.ndarray, x: np.ndarray, segment: ASegment, t: float) -> float:
        """
        Наибольшее t' <= t, при котором B имеет ранг W - 1.

        Near the a1 + a2 = 1 end of the segment the identity term of A
        vanishes and B drops rank numerically; the optimum is then pulled
        back into the interior by bisection.
        """
        if self._rank_ok(values, x, *segment.point(t)):
            return t
        lo, hi = 0.0, t
        if not self._rank_ok(values, x, *segment.point(lo)):
            raise ConstructionError(f"B is rank deficient along the whole segment for x={tuple(int(v) for v in x)}")
        for _ in range(self.config.golden_iterations):
            mid = (lo + hi) / 2.0
            if self._rank_ok(values, x, *segment.point(mid)):
                lo = mid
            else:
                hi = mid
        logger.debug(f"Segment parameter for x={tuple(int(v) for v in x)} moved from {t!r} to {lo!r} to keep rank W-1")
        return lo

    def segment_profile(self, x: Sequence[int], sizes: Sequence[int], points: int = 1000) -> np.ndarray:
        """λ_max(B) на равномерной сетке t из [0, 1]; для перекрёстной проверки поиска"""
        values = self._sorted_sizes(sizes)
        vector = self._check_sign_vector(x, values)[None, :]
        _, _, _, start, end = self._segment_arrays(values, vector)
        grid = np.linspace(0.0, 1.0, points)
        evaluate = self._profile(values, np.repeat(vector, points, axis=0), start, end)
        return evaluate(grid)

    def minimax_b(self, sizes: Sequence[int]) -> BMatrix:
        values = _as_sizes(sizes)
        if values.min() == values.max():
            return self.b_balanced(int(values[0]), values.size)
        self._require_existence(values)

        order = np.argsort(values, kind='stable')
        ordered = values[order]
        xs, exhaustive = self._sign_matrix(ordered)
        xs = self._representatives(ordered, xs)
        logger.debug(f"Minimax search over {len(xs)} sign vectors (exhaustive={exhaustive})")

        best_t, best_lambda = [], []
        batch = self.config.search_batch
        for begin in range(0, len(xs), batch):
            t, lam = self._search_batch(ordered, xs[begin:begin + batch])
            best_t.append(t)
            best_lambda.append(lam)
        ts = np.concatenate(best_t)
        lambdas = np.concatenate(best_lambda)

        # равные λ_max: лексикографически наименьший x
        floor = lambdas.min()
        tied = lambdas <= floor + 1e-10 * max(abs(floor), 1.0)
        candidates = sorted(np.flatnonzero(tied), key=lambda i: tuple(xs[i]))
        candidates += sorted(np.flatnonzero(~tied), key=lambda i: (lambdas[i], tuple(xs[i])))

        for i in candidates:
            segment = self.solve_a_segment(xs[i], ordered)
            try:
                t = self._rank_safe_t(ordered, xs[i], segment, float(ts[i]))
            except ConstructionError as e:
                logger.warning(f"Candidate x={tuple(xs[i])} rejected: {e}")
                continue
            a1, a2 = segment.point(t)
            try:
                b = self.assemble_b(xs[i], a1, a2, ordered, exhaustive=exhaustive, sort_order=order)
            except ConstructionError as e:
                logger.warning(f"Candidate x={tuple(xs[i])} at t={t!r} rejected: {e}")
                continue
            logger.info(
                f"Minimax B for sizes {values.tolist()}: lambda_max={b.lambda_max!r}, "
                f"x={b.provenance.x}, a=({a1!r}, {a2!r})"
            )
            return b
        raise ConstructionError(f"No sign vector produced a verified B for sizes {values.tolist()}")

    # ------------------------------------------------------------ documents

    def document(self, b: BMatrix, sizes: Sequence[int], mode: str, psd: Optional[bool] = None) -> BMatrixDocument:
        report = self.verify_c1_c2_c3(b, sizes)
        return BMatrixDocument(
            sizes=[int(v) for v in sizes],
            mode=mode,
            entries=b.matrix.tolist(),
            eigenvalues=list(b.eigenvalues),
            lambda_max=b.lambda_max,
            lambda_lower_bound=self.lambda_lower_bound(sizes),
            psd=psd,
            provenance=b.provenance.model_dump(exclude_none=True),
            checks=report,
            passed=report.passed,
        )


def get_bmatrix_service() -> BMatrixService:
    return BMatrixService()
