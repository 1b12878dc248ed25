"""Linear Poisson model training by EM on the extended likelihood.

A model is a set of shared component PMFs over the (ADC bin x timepoint)
grid plus, per histogram, non-negative component quantities measured in
voxel counts. Training is two-phase: control components are learnt from the
control cohort alone; treatment components are then learnt from the treated
cohort with the control components frozen.

Internally histograms are flattened to vectors of length n_cells; the PMF
matrix P has shape (n_cells, K) with columns summing to one, and quantities
Q have shape (S, K). The multiplicative fixed-point updates

    Q <- Q * ((H / M) @ P)
    P[:, k] <- P[:, k] * (R.T @ Q)[:, k]  (renormalised, trainable k only)

with M = Q @ P.T and R = H / M never leave the non-negative cone and never
decrease the objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BinningMismatchError, EmptyInputError
from .histograms import BinningConfig, Histogram2D

_M_FLOOR = 1e-300
_DEGENERACY_FRACTION = 1e-6  # of total counts, per trainable component


@dataclass(frozen=True)
class TrainOptions:
    seed: int = 0
    restarts: int = 5
    max_iter: int = 10000
    tol: float = 1e-9  # relative log-likelihood change


@dataclass
class ComponentPmf:
    probs: np.ndarray  # (n_adc_bins, 2), sums to 1
    phase: str  # "control" | "treatment"
    index: int

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < 0):
            raise ValueError("PMF cells must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"PMF must sum to 1, got {self.probs.sum()}")


@dataclass
class FitDiagnostics:
    log_likelihood: float
    n_iterations: int
    converged: bool
    restart_index: int = 0


@dataclass
class LpmModel:
    components: list  # ComponentPmf, control first then treatment
    n_control: int
    n_treatment: int
    binning: BinningConfig
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_control < 1 or self.n_treatment < 0:
            raise ValueError("need n_control >= 1 and n_treatment >= 0")
        if len(self.components) != self.n_control + self.n_treatment:
            raise ValueError("component count does not match n_control + n_treatment")
        for i, comp in enumerate(self.components):
            expected_phase = "control" if i < self.n_control else "treatment"
            if comp.phase != expected_phase:
                raise ValueError(f"component {i} has phase {comp.phase!r}, "
                                 f"expected {expected_phase!r}")
            if comp.probs.shape != (self.binning.n_adc_bins, 2):
                raise ValueError("component grid does not match binning")

    @property
    def n_components(self) -> int:
        return self.n_control + self.n_treatment

    @property
    def treatment_slice(self) -> slice:
        return slice(self.n_control, self.n_components)

    def pmf_matrix(self) -> np.ndarray:
        """Column-stacked flattened PMFs, shape (n_cells, K)."""
        return np.column_stack([c.probs.reshape(-1) for c in self.components])

    def to_json_dict(self):
        return {
            "binning": self.binning.to_json_dict(),
            "n_control": self.n_control,
            "n_treatment": self.n_treatment,
            "components": [{"phase": c.phase, "probs": c.probs.tolist()}
                           for c in self.components],
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_json_dict(cls, d) -> "LpmModel":
        binning = BinningConfig.from_json_dict(d["binning"])
        comps = [ComponentPmf(probs=np.asarray(c["probs"], dtype=float),
                              phase=c["phase"], index=i)
                 for i, c in enumerate(d["components"])]
        return cls(components=comps, n_control=d["n_control"],
                   n_treatment=d["n_treatment"], binning=binning,
                   training_meta=d.get("training_meta", {}))


@dataclass
class TrainResult:
    model: LpmModel
    quantities: dict  # tumor_id -> np.ndarray of length K
    diagnostics: FitDiagnostics


def write_model_json(path, model: LpmModel):
    with open(path, "w") as fh:
        json.dump(model.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_model_json(path) -> LpmModel:
    with open(path) as fh:
        return LpmModel.from_json_dict(json.load(fh))


def _loglik(H, P, Q):
    """Extended likelihood: sum H*ln(M) - sum Q, over all histograms."""
    M = np.maximum(Q @ P.T, _M_FLOOR)
    mask = H > 0
    return float(np.sum(H[mask] * np.log(M[mask])) - Q.sum())


def _em(H, P, Q, trainable, max_iter, tol, rng=None):
    """Run the multiplicative EM updates to convergence.

    H: (S, n_cells) counts; P: (n_cells, K) column-normalised PMFs;
    Q: (S, K) quantities; trainable: boolean mask over components whose
    PMF columns may move. Returns (P, Q, diagnostics, degenerate_flag).
    """
    H = np.asarray(H, dtype=float)
    total_counts = H.sum()
    prev = _loglik(H, P, Q)
    converged = False
    reseeded = set()
    degenerate = False
    it = 0
    for it in range(1, max_iter + 1):
        M = np.maximum(Q @ P.T, _M_FLOOR)
        R = H / M
        Q = Q * (R @ P)
        if trainable.any():
            M = np.maximum(Q @ P.T, _M_FLOOR)
            R = H / M
            W = R.T @ Q  # (n_cells, K)
            P_new = P * W
            colsum = P_new.sum(axis=0)
            for k in np.flatnonzero(trainable):
                if colsum[k] > 0:
                    P[:, k] = P_new[:, k] / colsum[k]
        cur = _loglik(H, P, Q)
        if cur < prev - 1e-6 * max(1.0, abs(prev)):
            raise RuntimeError(f"EM objective decreased: {prev} -> {cur}")
        if abs(cur - prev) <= tol * max(1.0, abs(prev)):
            # check trainable components for collapse before accepting
            mass = Q.sum(axis=0)
            weak = [k for k in np.flatnonzero(trainable)
                    if mass[k] < _DEGENERACY_FRACTION * total_counts]
            if weak and rng is not None and not reseeded.issuperset(weak):
                for k in weak:
                    if k in reseeded:
                        degenerate = True
                        continue
                    reseeded.add(k)
                    # re-seed from residual-weighted draw
                    M = np.maximum(Q @ P.T, _M_FLOOR)
                    resid = np.maximum(H - M, 0).sum(axis=0)
                    if resid.sum() <= 0:
                        resid = np.ones(P.shape[0])
                    probs = resid / resid.sum()
                    P[:, k] = rng.dirichlet(probs * P.shape[0] + 0.5)
                    Q[:, k] = H.sum(axis=1) / P.shape[1]
                prev = _loglik(H, P, Q)
                continue
            if weak:
                degenerate = True
            converged = True
            prev = cur
            break
        prev = cur
    diag = FitDiagnostics(log_likelihood=prev, n_iterations=it,
                          converged=converged, restart_index=0)
    return P, Q, diag, degenerate


def _stack(cohort, binning):
    for h in cohort:
        if h.binning != binning:
            raise BinningMismatchError(f"tumor {h.tumor_id}: binning differs from model")
        if h.total == 0:
            raise EmptyInputError(f"tumor {h.tumor_id}: empty histogram")
    return np.stack([h.counts.reshape(-1).astype(float) for h in cohort])


def _best_restart(H, n_cells, k_total, init_P, opts):
    """Run opts.restarts EM fits from random inits, keep the best likelihood."""
    best = None
    for r in range(opts.restarts):
        rng = np.random.default_rng(opts.seed + r)
        P, trainable = init_P(rng)
        Q = np.full((H.shape[0], k_total), 1.0, dtype=float)
        Q *= (H.sum(axis=1) / k_total)[:, None]
        P, Q, diag, degenerate = _em(H, P, Q, trainable, opts.max_iter, opts.tol, rng)
        diag.restart_index = r
        if best is None or diag.log_likelihood > best[2].log_likelihood:
            best = (P, Q, diag, degenerate)
    return best


def train_control(cohort, n_control: int, opts: TrainOptions = TrainOptions()) -> TrainResult:
    """Learn control components and per-histogram quantities from a cohort."""
    if not cohort:
        raise EmptyInputError("control cohort is empty")
    if n_control < 1:
        raise ValueError("n_control must be >= 1")
    binning = cohort[0].binning
    H = _stack(cohort, binning)
    n_cells = binning.n_cells

    def init_P(rng):
        P = np.column_stack([rng.dirichlet(np.ones(n_cells))
                             for _ in range(n_control)])
        return P, np.ones(n_control, dtype=bool)

    P, Q, diag, degenerate = _best_restart(H, n_cells, n_control, init_P, opts)
    comps = [ComponentPmf(probs=P[:, k].reshape(binning.n_adc_bins, 2),
                          phase="control", index=k) for k in range(n_control)]
    meta = {"seed": opts.seed, "restarts": opts.restarts,
            "iterations": diag.n_iterations, "final_loglik": diag.log_likelihood,
            "converged": diag.converged, "degenerate": degenerate,
            "phase": "control"}
    model = LpmModel(components=comps, n_control=n_control, n_treatment=0,
                     binning=binning, training_meta=meta)
    quantities = {h.tumor_id: Q[i].copy() for i, h in enumerate(cohort)}
    return TrainResult(model=model, quantities=quantities, diagnostics=diag)


def _purify_treatment(P, n_control):
    """Strip the control-expressible part out of each treatment PMF.

    Treatment components represent variability the control model cannot
    account for; any admixture of control shape in a treatment column is
    unidentifiable (it trades off against control quantities) and inflates
    treatment mass. Removing the best non-negative control combination
    leaves the model span unchanged while pinning treatment columns to the
    additional-variability end of the ridge.
    """
    from scipy.optimize import nnls

    P = P.copy()
    Pc = P[:, :n_control]
    for k in range(n_control, P.shape[1]):
        beta, _ = nnls(Pc, P[:, k])
        resid = np.maximum(P[:, k] - Pc @ beta, 0.0)
        if resid.sum() > 0:
            P[:, k] = resid / resid.sum()
    return P


def train_treatment(control_model: LpmModel, cohort, n_treatment: int,
                    opts: TrainOptions = TrainOptions()) -> TrainResult:
    """Extend a control model with treatment components learnt from a cohort.

    Control PMFs are held fixed; only treatment PMFs and the per-histogram
    quantities (control and treatment alike) are optimised.
    """
    if control_model.n_treatment != 0:
        raise ValueError("base model already has treatment components")
    if not cohort:
        raise EmptyInputError("treated cohort is empty")
    binning = control_model.binning
    H = _stack(cohort, binning)
    n_cells = binning.n_cells
    n_control = control_model.n_control
    k_total = n_control + n_treatment
    P_control = control_model.pmf_matrix()

    if n_treatment == 0:
        quantities = {}
        diag = None
        for h in cohort:
            q, d = fit_quantities(control_model, h)
            quantities[h.tumor_id] = q
            diag = d
        return TrainResult(model=control_model, quantities=quantities,
                           diagnostics=diag)

    # Treatment components describe variability the control model cannot
    # absorb. Random inits land anywhere on the likelihood ridge where a
    # treatment PMF blends in control shape (inflating treatment mass), so
    # seed them from the positive residual of a control-only fit instead.
    residual = np.zeros(n_cells)
    for i, h in enumerate(cohort):
        q0, _ = fit_quantities(control_model, h, max_iter=2000, tol=1e-10)
        residual += np.maximum(H[i] - P_control @ q0, 0.0)
    if residual.sum() <= 0:
        residual = np.ones(n_cells)
    residual = residual / residual.sum()

    def init_P(rng):
        P = np.empty((n_cells, k_total))
        P[:, :n_control] = P_control
        for k in range(n_control, k_total):
            jitter = rng.gamma(4.0, size=n_cells)
            p = residual * jitter
            P[:, k] = p / p.sum()
        trainable = np.zeros(k_total, dtype=bool)
        trainable[n_control:] = True
        return P, trainable

    P, Q, diag, degenerate = _best_restart(H, n_cells, k_total, init_P, opts)
    if not np.array_equal(P[:, :n_control], P_control):
        raise RuntimeError("control components changed during treatment training")
    P = _purify_treatment(P, n_control)
    comps = list(control_model.components)
    comps += [ComponentPmf(probs=P[:, k].reshape(binning.n_adc_bins, 2),
                           phase="treatment", index=k)
              for k in range(n_control, k_total)]
    meta = dict(control_model.training_meta)
    meta.update({"treatment_seed": opts.seed, "treatment_restarts": opts.restarts,
                 "treatment_iterations": diag.n_iterations,
                 "treatment_final_loglik": diag.log_likelihood,
                 "treatment_converged": diag.converged,
                 "treatment_degenerate": degenerate, "phase": "full"})
    model = LpmModel(components=comps, n_control=n_control,
                     n_treatment=n_treatment, binning=binning,
                     training_meta=meta)
    # purification moved quantities between components; refit them so the
    # reported values are maximum likelihood under the final PMFs
    quantities = {}
    for i, h in enumerate(cohort):
        q, _ = fit_quantities(model, h, q_init=np.maximum(Q[i], H[i].sum() * 1e-6))
        quantities[h.tumor_id] = q
    return TrainResult(model=model, quantities=quantities, diagnostics=diag)


def fit_quantities(model: LpmModel, h: Histogram2D, max_iter: int = 200000,
                   tol: float = 1e-12, q_init=None):
    """Fit component quantities to one histogram with PMFs fixed.

    The quantity-only objective is concave, so the fixed point is unique
    (up to component collinearity) and the fit is deterministic: the default
    start is the uniform split of the total count.
    """
    if h.binning != model.binning:
        raise BinningMismatchError(f"tumor {h.tumor_id}: binning differs from model")
    if h.total == 0:
        raise EmptyInputError(f"tumor {h.tumor_id}: empty histogram")
    P = model.pmf_matrix()
    hv = h.counts.reshape(-1).astype(float)
    K = model.n_components
    if q_init is None:
        q = np.full(K, hv.sum() / K)
    else:
        q = np.asarray(q_init, dtype=float).copy()
    prev = _loglik(hv[None, :], P, q[None, :])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        M = np.maximum(P @ q, _M_FLOOR)
        q = q * (P.T @ (hv / M))
        cur = _loglik(hv[None, :], P, q[None, :])
        if abs(cur - prev) <= tol * max(1.0, abs(prev)):
            converged = True
            prev = cur
            break
        prev = cur
    diag = FitDiagnostics(log_likelihood=prev, n_iterations=it, converged=converged)
    return q, diag


def model_expectation(model: LpmModel, q) -> np.ndarray:
    """Expected counts grid M = sum_k q_k * pmf_k, shape (n_adc_bins, 2)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_components,):
        raise ValueError(f"expected {model.n_components} quantities, got {q.shape}")
    P = model.pmf_matrix()
    return (P @ q).reshape(model.binning.n_adc_bins, 2)
