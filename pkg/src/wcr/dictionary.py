"""Basis dictionaries and the flat coefficient layout used by the regression."""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

KINDS = ("monomial", "sin", "cos", "sin3", "cos3", "abs_pow_alpha", "x_gauss")
DIFFUSION_MODES = ("none", "constant", "diagonal", "full")
LEVY_MODES = ("none", "constant", "functional")
MAX_BASIS = 10_000


@dataclass(frozen=True)
class BasisElement:
    kind: str
    exponents: tuple = ()
    axis: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "monomial":
            exps = tuple(int(e) for e in self.exponents)
            if not exps or any(e < 0 for e in exps):
                raise ValueError("monomial exponents must be non-negative integers")
            object.__setattr__(self, "exponents", exps)
        elif self.axis < 0:
            raise ValueError("axis must be non-negative")

    @property
    def degree(self) -> int:
        return sum(self.exponents) if self.kind == "monomial" else -1

    @property
    def name(self) -> str:
        if self.kind == "monomial":
            parts = []
            for i, e in enumerate(self.exponents):
                if e == 1:
                    parts.append(f"x{i + 1}")
                elif e > 1:
                    parts.append(f"x{i + 1}^{e}")
            return "*".join(parts) or "1"
        ax = f"x{self.axis + 1}"
        return {
            "sin": f"sin({ax})",
            "cos": f"cos({ax})",
            "sin3": f"sin({ax})^3",
            "cos3": f"cos({ax})^3",
            "abs_pow_alpha": f"|{ax}|^alpha",
            "x_gauss": f"{ax}*exp(-{ax}^2)",
        }[self.kind]

    def min_dim(self) -> int:
        return len(self.exponents) if self.kind == "monomial" else self.axis + 1


def monomial(*exponents: int) -> BasisElement:
    return BasisElement("monomial", tuple(exponents))


_FUNC_RE = re.compile(r"^(sin|cos)\(x(\d+)\)(\^3)?$")
_ABS_RE = re.compile(r"^\|x(\d+)\|\^alpha$")
_XG_RE = re.compile(r"^x(\d+)\*exp\(-x(\d+)\^2\)$")
_MONO_RE = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def parse_element(text: str, dim: int) -> BasisElement:
    """Inverse of :attr:`BasisElement.name` for a given dimension."""
    s = text.replace(" ", "")
    m = _FUNC_RE.match(s)
    if m:
        kind = m.group(1) + ("3" if m.group(3) else "")
        return BasisElement(kind, axis=_axis(m.group(2), dim))
    m = _ABS_RE.match(s)
    if m:
        return BasisElement("abs_pow_alpha", axis=_axis(m.group(1), dim))
    m = _XG_RE.match(s)
    if m and m.group(1) == m.group(2):
        return BasisElement("x_gauss", axis=_axis(m.group(1), dim))
    exps = [0] * dim
    if s != "1":
        for factor in s.split("*"):
            m = _MONO_RE.match(factor)
            if not m:
                raise ValueError(f"cannot parse basis element {text!r}")
            exps[_axis(m.group(1), dim)] += int(m.group(2) or 1)
    return BasisElement("monomial", tuple(exps))


def _axis(label: str, dim: int) -> int:
    i = int(label) - 1
    if not 0 <= i < dim:
        raise ValueError(f"axis x{label} outside dimension {dim}")
    return i


@dataclass(frozen=True)
class BasisDictionary:
    """Ordered list of basis functions over R^d."""

    elements: tuple
    dim: int
    degree: int | None = None
    alpha: float | None = None
    _max_power: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        elems = tuple(self.elements)
        if not elems:
            raise ValueError("basis dictionary must not be empty")
        if len(set(elems)) != len(elems):
            raise ValueError("duplicate basis elements")
        for e in elems:
            if e.kind == "monomial" and len(e.exponents) != self.dim:
                raise ValueError(f"{e.name} has wrong dimension for dim={self.dim}")
            if e.min_dim() > self.dim:
                raise ValueError(f"{e.name} references an axis beyond dim={self.dim}")
        object.__setattr__(self, "elements", elems)
        mp = max((max(e.exponents) for e in elems if e.kind == "monomial"), default=0)
        object.__setattr__(self, "_max_power", mp)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.elements]

    def needs_alpha(self) -> bool:
        return any(e.kind == "abs_pow_alpha" for e in self.elements)

    def with_alpha(self, alpha: float) -> "BasisDictionary":
        return BasisDictionary(self.elements, self.dim, self.degree, float(alpha))

    def index(self, element) -> int:
        if isinstance(element, str):
            element = parse_element(element, self.dim)
        return self.elements.index(element)

    def __call__(self, x) -> np.ndarray:
        return eval_basis(self, x)

    def to_json(self) -> dict:
        out = {"dim": self.dim, "elements": self.names}
        if self.degree is not None:
            out["degree"] = self.degree
        return out


def eval_basis(basis: BasisDictionary, x, alpha: float | None = None) -> np.ndarray:
    """Evaluate every element at ``x`` of shape (d,) or (N, d).

    Returns shape (b,) or (N, b).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != basis.dim:
        raise ValueError(f"expected points of dimension {basis.dim}, got {X.shape[1]}")
    alpha = basis.alpha if alpha is None else alpha
    if alpha is None and basis.needs_alpha():
        raise ValueError("|x|^alpha basis element requires alpha to be set")
    n = X.shape[0]
    powers = [np.ones((n, basis.dim))]
    for _ in range(basis._max_power):
        powers.append(powers[-1] * X)
    out = np.empty((n, len(basis)))
    for j, e in enumerate(basis.elements):
        if e.kind == "monomial":
            col = np.ones(n)
            for i, p in enumerate(e.exponents):
                if p:
                    col = col * powers[p][:, i]
            out[:, j] = col
        elif e.kind == "sin":
            out[:, j] = np.sin(X[:, e.axis])
        elif e.kind == "cos":
            out[:, j] = np.cos(X[:, e.axis])
        elif e.kind == "sin3":
            out[:, j] = np.sin(X[:, e.axis]) ** 3
        elif e.kind == "cos3":
            out[:, j] = np.cos(X[:, e.axis]) ** 3
        elif e.kind == "x_gauss":
            out[:, j] = X[:, e.axis] * np.exp(-X[:, e.axis] ** 2)
        else:
            out[:, j] = np.abs(X[:, e.axis]) ** alpha
    return out[0] if single else out


def _compositions(total: int, parts: int):
    """All exponent tuples of length ``parts`` summing to ``total``, descending lex."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def full_poly_basis(dim: int, degree: int, cap: int = MAX_BASIS) -> BasisDictionary:
    """All monomials of total degree <= ``degree`` in graded-lex order."""
    if dim < 1 or degree < 0:
        raise ValueError("need dim >= 1 and degree >= 0")
    if math.comb(degree + dim, degree) > cap:
        raise ValueError(f"basis size C({degree + dim},{degree}) exceeds cap {cap}")
    elems = [monomial(*e) for p in range(degree + 1) for e in _compositions(p, dim)]
    return BasisDictionary(tuple(elems), dim, degree=degree)


def reduced_basis(elements, dim: int | None = None) -> BasisDictionary:
    """Dictionary from an explicit element list (objects or names) in the given order."""
    elements = list(elements)
    if not elements:
        raise ValueError("basis dictionary must not be empty")
    if dim is None:
        dim = max(e.min_dim() for e in elements if isinstance(e, BasisElement))
    elems = [parse_element(e, dim) if isinstance(e, str) else e for e in elements]
    return BasisDictionary(tuple(elems), dim)


def separable_poly_basis(dim: int, degree: int) -> BasisDictionary:
    """``{1} U {x_i^k : 1 <= k <= degree}``, axis-major: the terms of uncoupled polynomial drifts."""
    if dim < 1 or degree < 0:
        raise ValueError("need dim >= 1 and degree >= 0")
    elems = [monomial(*([0] * dim))]
    for i in range(dim):
        for k in range(1, degree + 1):
            e = [0] * dim
            e[i] = k
            elems.append(monomial(*e))
    return BasisDictionary(tuple(elems), dim, degree=degree)


def element_axes(e: BasisElement) -> frozenset:
    """Coordinates an element depends on."""
    if e.kind == "monomial":
        return frozenset(i for i, p in enumerate(e.exponents) if p)
    return frozenset([e.axis])


def own_axis_mask(basis: BasisDictionary) -> np.ndarray:
    """(d, b) mask letting drift component ``i`` use only constants and functions of ``x_i``."""
    axes = [element_axes(e) for e in basis.elements]
    return np.array([[a <= {i} for a in axes] for i in range(basis.dim)], dtype=bool)


def trig_basis() -> BasisDictionary:
    """``{1, x, x^2, x^3, sin x, cos x, sin^3 x, cos^3 x}`` in one dimension."""
    return reduced_basis(
        ["1", "x1", "x1^2", "x1^3", "sin(x1)", "cos(x1)", "sin(x1)^3", "cos(x1)^3"], 1
    )


def radial_cubic_basis(dim: int) -> BasisDictionary:
    """``{1} U {x_i} U {x_i x_j^2}``: the terms a gradient of ``a|x|^2 + b|x|^4`` can use."""
    elems = [monomial(*([0] * dim)), *(monomial(*np.eye(dim, dtype=int)[i]) for i in range(dim))]
    cubic = set()
    for i, j in itertools.product(range(dim), repeat=2):
        e = [0] * dim
        e[i] += 1
        e[j] += 2
        cubic.add(tuple(e))
    elems += [monomial(*e) for e in sorted(cubic, reverse=True)]
    return BasisDictionary(tuple(elems), dim)


def levy_intensity_basis(alpha: float | None = None) -> BasisDictionary:
    """``{1, |x|^alpha}`` for the one-dimensional state-dependent Levy intensity."""
    return BasisDictionary((monomial(0), BasisElement("abs_pow_alpha", axis=0)), 1, alpha=alpha)


def basis_from_json(spec, dim: int) -> BasisDictionary:
    """Build a dictionary from a config descriptor.

    Accepted forms: ``{"kind": "poly", "degree": p}``,
    ``{"kind": "separable", "degree": p}``, ``{"kind": "trig"}``,
    ``{"kind": "radial_cubic"}``, ``{"kind": "levy"}`` or
    ``{"elements": [names...]}``.
    """
    if isinstance(spec, list):
        return reduced_basis(spec, dim)
    kind = spec.get("kind", "list")
    if kind == "poly":
        return full_poly_basis(dim, int(spec["degree"]))
    if kind == "separable":
        return separable_poly_basis(dim, int(spec["degree"]))
    if kind == "trig":
        return trig_basis()
    if kind == "radial_cubic":
        return radial_cubic_basis(dim)
    if kind == "levy":
        return levy_intensity_basis()
    return reduced_basis(spec["elements"], dim)


@dataclass(frozen=True)
class CoefficientLayout:
    """Bijection between the flat coefficient vector and its structured blocks.

    Order: drift ``(i, j)`` row-major, then diffusion (``G = sigma sigma^T / 2``)
    row-major, then the Levy block.

    ``drift_mask`` (shape (d, b), optional) marks which drift coefficients
    are free; masked-out entries are structural zeros that the regression
    never activates.
    """

    dim: int
    drift_basis: BasisDictionary
    diffusion: str = "constant"
    diffusion_basis: BasisDictionary | None = None
    levy: str = "constant"
    levy_basis: BasisDictionary | None = None
    drift_mask: tuple | None = None

    def __post_init__(self):
        if self.diffusion not in DIFFUSION_MODES:
            raise ValueError(f"unknown diffusion mode {self.diffusion!r}")
        if self.levy not in LEVY_MODES:
            raise ValueError(f"unknown levy mode {self.levy!r}")
        if self.drift_basis.dim != self.dim:
            raise ValueError("drift basis dimension mismatch")
        if self.diffusion in ("diagonal", "full") and self.diffusion_basis is None:
            object.__setattr__(self, "diffusion_basis", self.drift_basis)
        if self.levy == "functional":
            if self.dim != 1:
                raise ValueError("functional Levy intensity is only supported in one dimension")
            if self.levy_basis is None:
                object.__setattr__(self, "levy_basis", levy_intensity_basis())
        if self.drift_mask is not None:
            m = np.asarray(self.drift_mask, dtype=bool)
            if m.shape != (self.dim, len(self.drift_basis)):
                raise ValueError(f"drift mask must have shape {(self.dim, len(self.drift_basis))}")
            object.__setattr__(self, "drift_mask", tuple(tuple(bool(v) for v in r) for r in m))

    @property
    def free(self) -> np.ndarray:
        """Flat boolean vector of coefficients the regression may use."""
        out = np.ones(self.size, dtype=bool)
        if self.drift_mask is not None:
            out[self.slices["drift"]] = np.asarray(self.drift_mask).ravel()
        return out

    @property
    def shapes(self) -> dict:
        d = self.dim
        shapes = {"drift": (d, len(self.drift_basis))}
        shapes["diffusion"] = {
            "none": (0,),
            "constant": (d,),
            "diagonal": (d, len(self.diffusion_basis or ())),
            "full": (d, d, len(self.diffusion_basis or ())),
        }[self.diffusion]
        shapes["levy"] = {
            "none": (0,),
            "constant": (d,),
            "functional": (len(self.levy_basis or ()),),
        }[self.levy]
        return shapes

    @property
    def slices(self) -> dict:
        out, start = {}, 0
        for block, shape in self.shapes.items():
            n = int(np.prod(shape))
            out[block] = slice(start, start + n)
            start += n
        return out

    @property
    def size(self) -> int:
        return self.slices["levy"].stop

    def locate(self, k: int) -> tuple:
        """Flat index -> ``(block, structured index tuple)``."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        for block, sl in self.slices.items():
            if sl.start <= k < sl.stop:
                return block, tuple(int(v) for v in np.unravel_index(k - sl.start, self.shapes[block]))
        raise AssertionError("unreachable")

    def flat_index(self, block: str, idx: tuple) -> int:
        sl = self.slices[block]
        return sl.start + int(np.ravel_multi_index(idx, self.shapes[block]))

    def split(self, zeta) -> dict:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (self.size,):
            raise ValueError(f"coefficient vector must have length {self.size}")
        return {b: zeta[sl].reshape(self.shapes[b]) for b, sl in self.slices.items()}

    def join(self, drift, diffusion=None, levy=None) -> np.ndarray:
        parts = {"drift": drift, "diffusion": diffusion, "levy": levy}
        out = []
        for block, shape in self.shapes.items():
            arr = np.zeros(shape) if parts[block] is None else np.asarray(parts[block], float)
            if arr.shape != shape and arr.size != 0:
                raise ValueError(f"{block} block must have shape {shape}, got {arr.shape}")
            out.append(arr.reshape(-1))
        return np.concatenate(out)

    def names(self) -> list[str]:
        names = []
        for k in range(self.size):
            block, idx = self.locate(k)
            if block == "drift":
                names.append(f"m{idx[0] + 1}[{self.drift_basis.names[idx[1]]}]")
            elif block == "diffusion":
                if self.diffusion == "constant":
                    names.append(f"G{idx[0] + 1}{idx[0] + 1}")
                elif self.diffusion == "diagonal":
                    names.append(f"G{idx[0] + 1}{idx[0] + 1}[{self.diffusion_basis.names[idx[1]]}]")
                else:
                    names.append(f"G{idx[0] + 1}{idx[1] + 1}[{self.diffusion_basis.names[idx[2]]}]")
            elif self.levy == "constant":
                names.append(f"levy{idx[0] + 1}")
            else:
                names.append(f"levy[{self.levy_basis.names[idx[0]]}]")
        return names

    def to_json(self) -> dict:
        out = {"dim": self.dim, "drift_basis": self.drift_basis.names,
               "diffusion": self.diffusion, "levy": self.levy}
        if self.diffusion in ("diagonal", "full"):
            out["diffusion_basis"] = self.diffusion_basis.names
        if self.levy == "functional":
            out["levy_basis"] = self.levy_basis.names
        if self.drift_mask is not None:
            out["drift_mask"] = [list(r) for r in self.drift_mask]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "CoefficientLayout":
        d = int(obj["dim"])
        kw = {}
        if "diffusion_basis" in obj:
            kw["diffusion_basis"] = basis_from_json(obj["diffusion_basis"], d)
        if "levy_basis" in obj:
            kw["levy_basis"] = basis_from_json(obj["levy_basis"], d)
        drift = basis_from_json(obj["drift_basis"], d)
        mask = obj.get("drift_mask")
        if mask == "own_axis":
            mask = own_axis_mask(drift)
        return cls(d, drift, obj.get("diffusion", "constant"), levy=obj.get("levy", "constant"),
                   drift_mask=None if mask is None else np.asarray(mask, dtype=bool), **kw)
