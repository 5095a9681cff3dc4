"""Small builders shared by the test modules."""

from dataclasses import dataclass

import numpy as np

from sparsepor.core import D1, Dataset, LevelProportions, TargetParameter, TreatmentSpec
from sparsepor.core import empirical_proportions
from sparsepor.dgp import DgpSpec, OutcomeNoise, PropensityProfile, generate
from sparsepor.nuisance import NuisanceModel


@dataclass(frozen=True, eq=False)
class ConstantNuisance(NuisanceModel):
    """Per-level constant propensities and regressions (single treatments)."""

    spec: TreatmentSpec
    varpi: LevelProportions
    pis: np.ndarray
    mus: np.ndarray
    floor: float = 0.0

    def _pi(self, a, x):
        return self.pis[np.asarray(a) - 1]

    def mu(self, a, x):
        return self.mus[np.asarray(a) - 1]


def constant_model(dataset, pis, mus):
    return ConstantNuisance(dataset.spec, empirical_proportions(dataset, D1),
                            np.asarray(pis, float), np.asarray(mus, float))


def single_dataset(a, y, fold, k, x=None):
    a = np.asarray(a)
    x = np.linspace(0.05, 0.95, len(a)) if x is None else x
    return Dataset(TreatmentSpec("single", k), x, a, y, fold)


def simulate_single(k, n, psi, psi0=0.0, seed=0, confounding=0.0, sigma=1.0, **kw):
    prop = PropensityProfile.near(0.5, 2.0) if confounding > 0 else PropensityProfile()
    spec = DgpSpec(TreatmentSpec("single", k), n, TargetParameter(psi0, np.asarray(psi, float)),
                   propensity=kw.pop("propensity", prop), noise=OutcomeNoise.gaussian(sigma),
                   confounding=confounding, seed=seed, **kw)
    return generate(spec)
