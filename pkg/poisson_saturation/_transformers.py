import numpy as np
import pandas as pd
import pyterrier as pt
import pyterrier_alpha as pta

from poisson_saturation._errors import NotPoissonError
from poisson_saturation._model import (
    LocalModel,
    fiber_samples,
    normal_form_mismatch,
    saturation_chart,
    verify_saturation_poisson,
)
from poisson_saturation._submanifold import as_grid


def grid_frame(grid: np.ndarray, k: int) -> pd.DataFrame:
    """A frame with one parameter array ``u`` per row."""
    return pd.DataFrame({'u': list(as_grid(grid, k))})


class FiberSampler(pt.Transformer):
    """Expands each parameter ``u`` into bundle-chart states ``(u, s)``: the zero section plus quasi-random fiber
    covectors."""
    def __init__(self,
        model: LocalModel,
        radius: float,
        *,
        fiber_points: int = 4,
        seed: int = 0,
    ):
        """Initializes the sampler.

        Args:
            model: the local model whose fibers are sampled.
            radius: bound on the norm of the sampled covectors.
            fiber_points: number of nonzero covectors per parameter.
            seed: seed of the quasi-random sequence.
        """
        self.model = model
        self.radius = radius
        self.fiber_points = fiber_points
        self.seed = seed

    __repr__ = pta.transformer_repr

    def transform(self, inp: pd.DataFrame) -> pd.DataFrame:
        """Samples fiber states.

        Args:
            inp: A DataFrame with a 'u' column of parameter arrays.

        Returns:
            One row per state, with the columns of `inp` plus 's'.
        """
        pta.validate.columns(inp, includes=['u'])
        rows, fibers = [], []
        for i, u in enumerate(inp['u']):
            states = fiber_samples(self.model, np.reshape(u, (1, -1)), self.radius, self.fiber_points, self.seed)
            rows.extend([i] * len(states))
            fibers.extend(s for _, s in states)
        return inp.iloc[rows].reset_index(drop=True).assign(s=fibers)


class SaturationSampler(pt.Transformer):
    """Maps bundle-chart states to the local Poisson saturation and checks that it is a Poisson submanifold there."""
    def __init__(self, model: LocalModel, *, verbose: bool = False):
        """Initializes the sampler.

        Args:
            model: the local model providing ``(u, s) ↦ exp_χ(j_u(s))``.
            verbose: show a progress bar over the states.
        """
        self.model = model
        self.verbose = verbose

    __repr__ = pta.transformer_repr

    def transform(self, inp: pd.DataFrame) -> pd.DataFrame:
        """Samples the saturation chart.

        Args:
            inp: A DataFrame with 'u' and 's' columns.

        Returns:
            `inp` with 'x' (the point of P), 'rank' (of the chart Jacobian), 'left_domain' and 'residual' (the part of
            ``π^♯(TP⁰)`` outside ``TP``).
        """
        pta.validate.columns(inp, includes=['u', 's'])
        chart = saturation_chart(self.model, zip(inp['u'], inp['s']), verbose=self.verbose)
        leaks = verify_saturation_poisson(self.model.pi, chart)
        return inp.assign(
            x=list(chart.points),
            rank=chart.ranks,
            left_domain=chart.left_domain,
            residual=list(leaks.residuals),
        )


class NormalFormVerifier(pt.Transformer):
    """Compares the pushed-forward local-model bivector with the ambient bivector compressed to ``TP``."""
    def __init__(self, model: LocalModel, *, verbose: bool = False):
        """Initializes the verifier.

        Args:
            model: the local model.
            verbose: show a progress bar over the states.
        """
        self.model = model
        self.verbose = verbose

    __repr__ = pta.transformer_repr

    def transform(self, inp: pd.DataFrame) -> pd.DataFrame:
        """Computes the normal-form mismatch per state.

        Args:
            inp: A DataFrame with 'u' and 's' columns.

        Returns:
            `inp` with 'x', 'extracted' (whether the model bivector exists at the state) and 'residual' (NaN where
            it does not).
        """
        pta.validate.columns(inp, includes=['u', 's'])
        it = enumerate(zip(inp['u'], inp['s']))
        if self.verbose:
            it = pt.tqdm(it, total=len(inp), unit='state', desc='NormalFormVerifier')
        results = pta.DataFrameBuilder(['_index', 'extracted', 'residual'])
        points = []
        for i, (u, s) in it:
            try:
                mismatch, extracted = normal_form_mismatch(self.model, u, s), True
            except NotPoissonError:
                mismatch, extracted = float('nan'), False
            points.append(self.model.point(u, s).y)
            results.extend({'_index': i, 'extracted': extracted, 'residual': mismatch})
        return results.to_df(merge_on_index=inp).assign(x=points)
