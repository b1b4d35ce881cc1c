"""Fill in one unobserved variable from the zero-profit identity ``value = K + R``."""

from __future__ import annotations

import numpy as np

from .model_core import Panel, VisibilityMask


class RecoveryError(ValueError):
    pass


def _scalar_or_array(a):
    return float(a) if np.ndim(a) == 0 else a


def recover_capital(value, R, capital_price: float = 1.0):
    value = np.asarray(value, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(~(value > R)):
        raise RecoveryError("housing value must exceed land cost to recover a positive capital input")
    return _scalar_or_array((value - R) / capital_price)


def recover_value(K, R, capital_price: float = 1.0):
    K = np.asarray(K, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(~(K > 0)):
        raise RecoveryError("capital input must be positive")
    value = capital_price * K + R
    if np.any(~(value > 0)):
        raise RecoveryError("recovered housing value is not positive")
    return _scalar_or_array(value)


def hide(panel: Panel, mask: VisibilityMask) -> Panel:
    """Blank the columns ``mask`` marks as unobserved, as a data provider would."""
    nan = np.full(panel.shape, np.nan)
    changes = {"mask": mask}
    if not mask.capital_observed:
        changes["K"] = nan
    if not mask.value_observed:
        changes["value"] = nan
        changes["Y"] = None
    if not mask.rent_observed:
        changes["R"] = nan
    return panel.replace(**changes)


def recover(panel: Panel, capital_price: float = 1.0) -> Panel:
    """Rebuild the hidden column of a masked panel; the result is fully observed."""
    mask = panel.mask
    if not mask.capital_observed:
        K = recover_capital(panel.value, panel.R, capital_price)
        return panel.replace(K=K, mask=VisibilityMask())
    if not mask.value_observed:
        value = recover_value(panel.K, panel.R, capital_price)
        return panel.replace(value=value, mask=VisibilityMask())
    if not mask.rent_observed:
        return panel.replace(R=panel.value - capital_price * panel.K, mask=VisibilityMask())
    return panel


def apply_mask(panel: Panel, mask: VisibilityMask, capital_price: float = 1.0) -> Panel:
    """Hide the columns ``mask`` excludes, then recover them from the identity.

    Recovery only ever sees the observed columns, so the output is what an
    estimator would get from real data with that visibility pattern.
    """
    if mask == VisibilityMask():
        return panel
    return recover(hide(panel, mask), capital_price)
