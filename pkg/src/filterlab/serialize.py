"""JSON wire format for operators and kets.

An operator is {"dim": n, "re": [[...]], "im": [[...]]}; a ket is the same
with flat lists.  The "im" field may be omitted for real data.  Round trips
are exact for finite doubles.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .operators import Ket, Operator, _as_matrix


def operator_to_json(A) -> dict:
    m = _as_matrix(A)
    return {"dim": int(m.shape[0]),
            "re": m.real.tolist(),
            "im": m.imag.tolist()}


def operator_from_json(doc: dict) -> Operator:
    if not isinstance(doc, dict) or "dim" not in doc or "re" not in doc:
        raise ConfigError("operator document needs 'dim' and 're' fields")
    n = int(doc["dim"])
    re = np.asarray(doc["re"], dtype=float)
    im = np.asarray(doc.get("im", np.zeros((n, n))), dtype=float)
    if re.shape != (n, n) or im.shape != (n, n):
        raise ConfigError(f"operator entries must be {n}x{n} arrays")
    return Operator(re + 1j * im)


def ket_to_json(psi: Ket) -> dict:
    v = psi.amplitudes
    return {"dim": int(v.shape[0]),
            "re": v.real.tolist(),
            "im": v.imag.tolist()}


def ket_from_json(doc: dict, normalized: bool = True) -> Ket:
    if not isinstance(doc, dict) or "dim" not in doc or "re" not in doc:
        raise ConfigError("ket document needs 'dim' and 're' fields")
    n = int(doc["dim"])
    re = np.asarray(doc["re"], dtype=float)
    im = np.asarray(doc.get("im", np.zeros(n)), dtype=float)
    if re.shape != (n,) or im.shape != (n,):
        raise ConfigError(f"ket entries must be length-{n} vectors")
    return Ket(re + 1j * im, normalized=normalized)
