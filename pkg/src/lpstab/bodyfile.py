"""JSON body files.

::

    {"format_version": 1, "dimension": 2, "representation": "fourier",
     "coefficients": [a0, a1, b1, a2, b2, ...], "metadata": {...}}

For ``dimension = 3`` the representation is ``"real_spherical_harmonics"``
and coefficient ``l*l + l + m`` belongs to degree ``l``, order
``m in [-l, l]`` (orthonormal real harmonics, sine part for ``m < 0``).
Trailing zero degrees are dropped, so files do not depend on the grid.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import sphere
from .body import ConvexBody, from_coefficients

FORMAT_VERSION = 1
REPRESENTATION = {2: "fourier", 3: "real_spherical_harmonics"}


class BodyFileError(ValueError):
    """Malformed body file."""


def _trimmed(c, n):
    band = sphere.effective_band(c, n)
    return c[:sphere.coefficient_count(n, band)]


def body_to_dict(K: ConvexBody, metadata: dict | None = None) -> dict:
    meta = {"label": K.label, "resolution": list(K.grid.resolution)}
    if "spec" in K.meta:
        meta["spec"] = K.meta["spec"]
    if "smoothing" in K.meta:
        meta["smoothing"] = K.meta["smoothing"]
    meta.update(metadata or {})
    return {"format_version": FORMAT_VERSION, "dimension": K.n,
            "representation": REPRESENTATION[K.n],
            "coefficients": [float(x) for x in _trimmed(np.asarray(K.coefficients), K.n)],
            "metadata": meta}


def dumps(K: ConvexBody, metadata: dict | None = None) -> str:
    return json.dumps(body_to_dict(K, metadata), indent=1, sort_keys=True) + "\n"


def body_from_dict(d: dict, grid: sphere.SphereGrid | None = None) -> ConvexBody:
    try:
        version = d["format_version"]
        n = int(d["dimension"])
        rep = d["representation"]
        coeffs = [float(x) for x in d["coefficients"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise BodyFileError(f"malformed body file: {exc}") from exc
    if version != FORMAT_VERSION:
        raise BodyFileError(f"unsupported format_version {version!r}")
    if REPRESENTATION.get(n) != rep:
        raise BodyFileError(f"representation {rep!r} does not match dimension {n}")
    if not all(math.isfinite(x) for x in coeffs):
        raise BodyFileError("coefficients must be finite")
    meta = d.get("metadata") or {}
    K = from_coefficients(n, coeffs, grid, label=meta.get("label"))
    if "spec" in meta:
        K.meta["spec"] = meta["spec"]
    return K


def loads(text: str, grid: sphere.SphereGrid | None = None) -> ConvexBody:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BodyFileError(f"not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise BodyFileError("body file must hold a JSON object")
    return body_from_dict(d, grid)


def write_body(K: ConvexBody, path, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(K, metadata))


def read_body(path, grid: sphere.SphereGrid | None = None) -> ConvexBody:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), grid)
