"""Recipe registry: figure id -> required inputs and renderer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import render as R


@dataclass(frozen=True)
class FigureRecipe:
    figure_id: str
    inputs: tuple[str, ...]  # glob patterns relative to the data directory
    renderer: Callable[[Path, Path], None]
    description: str

    def check_inputs(self, data: Path) -> None:
        for pattern in self.inputs:
            if not any(data.glob(pattern)):
                raise FileNotFoundError(
                    f"{self.figure_id}: no input matching {pattern!r} under {data}"
                )

    def render(self, data: Path, out: Path) -> None:
        self.check_inputs(Path(data))
        self.renderer(Path(data), Path(out))


RECIPES: dict[str, FigureRecipe] = {
    recipe.figure_id: recipe
    for recipe in (
        FigureRecipe(
            "fig1c",
            ("trajectory_mean.csv", "trajectory_ode.csv"),
            R.render_fig1c,
            "expected reward vs time with R and Q insets; sim solid, integration dashed",
        ),
        FigureRecipe(
            "fig2a",
            ("eta2_*/trajectory_mean.csv", "eta2_*/trajectory_ode.csv"),
            R.render_fig2a,
            "overlap curves across penalty rates",
        ),
        FigureRecipe(
            "fig2b",
            ("t0_*/trajectory_mean.csv",),
            R.render_fig2b,
            "overlap curves across sub-reward horizons (simulation only)",
        ),
        FigureRecipe(
            "fig2c",
            ("beta_*/trajectory_mean.csv", "beta_*/trajectory_ode.csv"),
            R.render_fig2c,
            "overlap curves across per-decision reward sizes",
        ),
        FigureRecipe(
            "fig3a",
            ("trajectory_optimal_T.csv", "trajectory_T*.csv"),
            R.render_fig3a,
            "episode-length curriculum vs constant lengths",
        ),
        FigureRecipe(
            "fig3b",
            ("trajectory_optimal_eta.csv", "trajectory_eta_*.csv"),
            R.render_fig3b,
            "learning-rate annealing vs constant rates",
        ),
        FigureRecipe(
            "fig3c",
            ("schedule_trace.csv",),
            R.render_fig3c,
            "evolution of the optimal T and eta along training",
        ),
        FigureRecipe(
            "fig4a",
            ("fixed_points.csv",),
            R.render_fig4a,
            "fixed points of the overlap flow against the penalty rate",
        ),
        FigureRecipe(
            "fig4b",
            ("phase_map.csv",),
            R.render_fig4b,
            "easy / hybrid-hard phases over the rate plane, long episodes",
        ),
        FigureRecipe(
            "fig4c",
            ("phase_map.csv",),
            R.render_fig4c,
            "easy / hybrid-hard phases over the rate plane, short episodes",
        ),
        FigureRecipe(
            "fig5a",
            ("T*/trajectory_mean.csv", "T*/trajectory_ode.csv"),
            R.render_fig5a,
            "expected reward across episode lengths",
        ),
        FigureRecipe(
            "fig5b",
            ("T*/trajectory_mean.csv", "T*/trajectory_ode.csv"),
            R.render_fig5b,
            "overlap across episode lengths",
        ),
        FigureRecipe(
            "fig5c",
            ("n*/trajectory_ode.csv",),
            R.render_fig5c,
            "overlap across reward stringency (n-or-more)",
        ),
        FigureRecipe(
            "appendix_d_critical_t13",
            ("convergence.csv",),
            R.render_appendix_d_critical,
            "convergence time against penalty and distance from criticality",
        ),
        FigureRecipe(
            "appendix_d_critical_t20",
            ("convergence.csv",),
            R.render_appendix_d_critical,
            "convergence time against penalty and distance from criticality",
        ),
        FigureRecipe(
            "appendix_d_flow",
            (
                "a_eta2_0/flow_field.csv",
                "b_eta2_005/flow_field.csv",
                "c_eta2_0045/flow_field.csv",
                "d_success_map/success_map.csv",
            ),
            R.render_appendix_d_flow,
            "flow fields over the (rho, Q) plane and the outcome map",
        ),
        FigureRecipe(
            "appendix_d_unconstrained",
            ("schedule_trace.csv",),
            R.render_appendix_d_unconstrained,
            "optimal schedules without the norm constraint",
        ),
    )
}
