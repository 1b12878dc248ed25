"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from lpm.histograms import BinningConfig, Histogram2D
from lpm.model import ComponentPmf, LpmModel
from lpm.synth import bump_pmf


@pytest.fixture
def binning():
    return BinningConfig()


@pytest.fixture
def small_binning():
    return BinningConfig(n_adc_bins=8)


def make_pmf(binning, seed, phase="control", index=0):
    """Random dense PMF on the (ADC bin x timepoint) grid."""
    rng = np.random.default_rng(seed)
    g = rng.gamma(3.0, size=(binning.n_adc_bins, 2))
    g /= g.sum()
    return ComponentPmf(probs=g, phase=phase, index=index)


def make_model(binning, n_control=2, n_treatment=0, seed=0):
    comps = [make_pmf(binning, seed + k, "control", k) for k in range(n_control)]
    comps += [make_pmf(binning, seed + n_control + k, "treatment", n_control + k)
              for k in range(n_treatment)]
    return LpmModel(components=comps, n_control=n_control,
                    n_treatment=n_treatment, binning=binning)


def poisson_histogram(model, q, seed, tumor_id="t1", cohort="control"):
    """Poisson draw of one histogram from a model at quantities q."""
    from lpm.model import model_expectation

    rng = np.random.default_rng(seed)
    counts = rng.poisson(model_expectation(model, q))
    return Histogram2D(tumor_id=tumor_id, cohort=cohort, counts=counts,
                      binning=model.binning)


def separated_components(binning, n_control, n_treatment, floor=0.0):
    """Bump components with control and treatment in distinct ADC ranges."""
    control = [bump_pmf(binning, 0.10 + 0.36 * (k + 0.5) / n_control,
                        0.12 + 0.36 * (k + 0.5) / n_control,
                        width=0.05, floor=floor, phase="control", index=k)
               for k in range(n_control)]
    treatment = [bump_pmf(binning, 0.52 + 0.24 * (k + 0.5) / max(n_treatment, 1),
                          0.80 + 0.14 * (k + 0.5) / max(n_treatment, 1),
                          width=0.05, floor=floor, phase="treatment",
                          index=n_control + k)
                 for k in range(n_treatment)]
    return control, treatment
