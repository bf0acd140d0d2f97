import logging
from typing import List

from models.design_model import SplitPlotDesign, serialize_level

logger = logging.getLogger(__name__)


class DesignService:
    """Проверка структуры split-plot дизайна"""

    def validate_design(self, design: SplitPlotDesign) -> List[str]:
        """Список нарушенных ограничений, пустой если дизайн корректен"""
        violations: List[str] = []
        structure = design.structure
        sizes = design.whole_plot_sizes

        if design.n_plots < 2:
            violations.append(f"whole-plot count: W={design.n_plots} < 2")
        for w, size in enumerate(sizes):
            if size < 2:
                violations.append(f"whole-plot size: M_{w}={size} < 2")

        unknown_z1 = [z1 for z1 in design.r1 if z1 not in structure.z1_levels]
        if unknown_z1:
            violations.append(
                f"whole-plot replication keys: unknown levels {[serialize_level(z) for z in unknown_z1]}"
            )
        for z1 in structure.z1_levels:
            if design.r1.get(z1, 0) < 1:
                violations.append(f"whole-plot replication: r1({serialize_level(z1)}) must be a positive integer")
        r1_total = sum(design.r1.values())
        if r1_total != design.n_plots:
            violations.append(f"whole-plot replication sum: {r1_total} != W={design.n_plots}")

        if len(design.r2) != design.n_plots:
            violations.append(
                f"sub-plot replication: {len(design.r2)} maps given for W={design.n_plots} whole plots"
            )
        for w, (size, plot) in enumerate(zip(sizes, design.r2)):
            unknown_z2 = [z2 for z2 in plot if z2 not in structure.z2_levels]
            if unknown_z2:
                violations.append(
                    f"sub-plot replication keys: whole plot {w} has unknown levels "
                    f"{[serialize_level(z) for z in unknown_z2]}"
                )
            for z2 in structure.z2_levels:
                if plot.get(z2, 0) < 1:
                    violations.append(
                        f"sub-plot replication: r2_{w}({serialize_level(z2)}) must be a positive integer"
                    )
            total = sum(plot.values())
            if total != size:
                violations.append(f"sub-plot replication sum: whole plot {w} sums to {total} != M_{w}={size}")

        if violations:
            logger.debug(f"Design has {len(violations)} violations: {violations}")
        return violations

    def is_balanced(self, design: SplitPlotDesign) -> bool:
        sizes = design.whole_plot_sizes
        if len(set(sizes)) != 1:
            return False
        first = design.r2[0]
        return all(
            all(plot.get(z2, 0) == first.get(z2, 0) for z2 in design.structure.z2_levels)
            for plot in design.r2[1:]
        )

    def mean_whole_plot_size(self, design: SplitPlotDesign) -> float:
        # N и W целые, делим один раз
        return design.n_units / design.n_plots


def get_design_service() -> DesignService:
    return DesignService()
