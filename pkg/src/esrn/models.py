"""Published closed-form predictors of the longitudinal dispersion coefficient.

Each model is a vectorised function of the column arrays ``w, d, U, Ustar``
returning ``Dl`` in m^2/s.  Most are written as ``Dl/(d*Ustar) = f(w/d, U/Ustar)``
and re-dimensionalised here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

G = 9.81  # m/s^2
ESRN_CONSTANT = 13.89


def froude(U, d):
    """Froude number ``U / sqrt(g d)``."""
    return np.asarray(U, dtype=float) / np.sqrt(G * np.asarray(d, dtype=float))


def deng_epsilon(wd, uu):
    """Transverse-mixing factor used by Deng et al. (2001)."""
    return 0.145 + np.asarray(wd, dtype=float) ** 1.38 * np.asarray(uu, dtype=float) / 3520.0


def _ratios(w, d, U, Ustar):
    return w / d, U / Ustar


def _elder1959(w, d, U, Ustar):
    return 5.86 * d * Ustar


def _fischer1979(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 0.011 * wd ** 2 * uu ** 2 * d * Ustar


def _liu1977(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 0.18 * wd ** 2 * uu ** 0.5 * d * Ustar


def _seo_cheong1998(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 5.915 * wd ** 0.62 * uu ** 1.428 * d * Ustar


def _koussis1998(w, d, U, Ustar):
    wd = w / d
    return 0.6 * wd ** 2 * d * Ustar


def _deng2001(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    eps = deng_epsilon(wd, uu)
    return 0.15 / (8.0 * eps) * wd ** 1.67 * uu ** 2 * d * Ustar


def _kashefipour2002(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    wide = 10.612 * uu ** 2
    narrow = (7.428 + 1.775 * wd ** 0.62 * uu ** 0.572) * uu ** 2
    return np.where(wd > 50, wide, narrow) * d * Ustar


def _zeng_huai2014(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 5.4 * wd ** 0.7 * uu ** 1.13 * d * Ustar


def _disley2014(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 3.563 * froude(U, d) ** -0.4117 * wd ** 0.6776 * uu ** 1.0132 * d * Ustar


def _sahay_dutta2009(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 2.0 * wd ** 0.96 * uu ** 1.25 * d * Ustar


def _li2013(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 2.2820 * wd ** 0.7613 * uu ** 1.4713 * d * Ustar


def _sattar_a(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    fr = froude(U, d)
    a = 2.9 * 4.6 ** np.sqrt(fr)
    b = 0.5 - fr
    c = 1.0 + np.sqrt(fr)
    return a * wd ** b * uu ** c * d * Ustar


def _sattar_b(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    fr = froude(U, d)
    b = 0.5 - 0.514 * fr ** 0.516 + uu * 0.42 ** uu
    return 8.45 * wd ** b * uu ** 1.65 * d * Ustar


def _wang_huai2016(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 17.648 * wd ** 0.3619 * uu ** 1.16 * d * Ustar


def _wang_huai2017(w, d, U, Ustar):
    # Printed with U/w on the right-hand side, which is not dimensionless.
    return (0.718 + 47.9 * d / w) * U / w * d * Ustar


def _alizadeh2017(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    wide = 9.931 * wd ** 0.187 * uu ** 1.802
    narrow = 5.319 * wd ** 1.206 * uu ** 0.075
    return np.where(wd > 28, wide, narrow) * d * Ustar


def _riahi2019(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    line1 = 33.99 * wd ** 0.5 + 8.497 * wd * uu ** -2 + 8.497 * w * Ustar / (d * U)
    line2 = (
        16.99 * w * Ustar / (d * U)
        + (0.0000486 * wd ** 0.5 - 0.00021) / (d ** 1.5 * Ustar ** 4) * w ** 1.6 * U ** 4
        + 0.01478
    )
    return (line1 + line2) * d * Ustar


def _memarzadeh_a(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    wide = (0.35 + 8.7 / wd) * (6.4 + 8.0 * wd) * uu ** 0.5
    narrow = 0.2694 * wd ** 2.2456
    return np.where(wd > 27, wide, narrow) * d * Ustar


def _memarzadeh_b(w, d, U, Ustar):
    wd, uu = _ratios(w, d, U, Ustar)
    return 4.5 * wd * uu ** 0.5 * d * Ustar


def _logistic_terms(w, d, U, Ustar, terms, constant):
    out = np.full(np.shape(w), constant, dtype=float)
    for coef, (cw, cd, cu, cs, c0) in terms:
        arg = np.clip(cw * w + cd * d + cu * U + cs * Ustar + c0, -700.0, 700.0)
        out = out + coef / (1.0 + np.exp(arg))
    return out


def _riahi2020_a(w, d, U, Ustar):
    terms = [
        (-124.74, (-0.02, 0.39, 3.52, 11.37, -3.72)),
        (374.99, (0.02, -0.48, 0.69, 11.37, 2.37)),
        (-517.15, (0.02, 0.87, -3.52, -2.04, -4.48)),
        (-636.76, (0.03, 1.6, 3.52, -4.49, -11.6)),
    ]
    return _logistic_terms(w, d, U, Ustar, terms, 227.59)


def _riahi2020_b(w, d, U, Ustar):
    terms = [
        (471.22, (0.04, -0.62, -2.71, 23.26, -9.21)),
        (315.96, (-0.023, 1.31, 0.54, 10.18, 1.91)),
        (-306.77, (0.021, 0.11, 2.04, -3.60, -7.25)),
        (-818.23, (0.01, 1.07, 2.14, 0.335, -7.20)),
        (-583.71, (-0.01, -0.24, 7.94, 1.49, 2.33)),
    ]
    return _logistic_terms(w, d, U, Ustar, terms, 227.59)


def _esrn_final(w, d, U, Ustar):
    return ESRN_CONSTANT * w * Ustar


@dataclass(frozen=True)
class Model:
    id: str
    seq: Optional[int]
    citation: str
    formula: str
    func: Callable = field(repr=False, compare=False)
    normalizer: Optional[str] = "d*Ustar"
    inputs: tuple = ("w", "d", "U", "Ustar")
    notes: tuple = ()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "seq": self.seq,
            "citation": self.citation,
            "formula": self.formula,
            "normalizer": self.normalizer,
            "required_inputs": list(self.inputs),
            "notes": list(self.notes),
        }


_CATALOG = [
    Model("elder1959", 3, "Elder (1959)", "Dl = 5.86*d*Ustar", _elder1959, None, ("d", "Ustar")),
    Model("fischer1979", 5, "Fischer et al. (1979)", "Dl/(d*Ustar) = 0.011*(w/d)^2*(U/Ustar)^2", _fischer1979),
    Model("liu1977", 7, "Liu (1977)", "Dl/(d*Ustar) = 0.18*(w/d)^2*(U/Ustar)^0.5", _liu1977),
    Model("seo_cheong1998", 8, "Seo and Cheong (1998)",
          "Dl/(d*Ustar) = 5.915*(w/d)^0.62*(U/Ustar)^1.428", _seo_cheong1998),
    Model("koussis1998", 9, "Koussis and Rodriguez-Mirasol (1998)", "Dl/(d*Ustar) = 0.6*(w/d)^2",
          _koussis1998, inputs=("w", "d", "Ustar")),
    Model("deng2001", 10, "Deng et al. (2001)",
          "Dl/(d*Ustar) = 0.15/(8*eps)*(w/d)^1.67*(U/Ustar)^2, eps = 0.145 + (w/d)^1.38*(U/Ustar)/3520",
          _deng2001),
    Model("kashefipour2002", 11, "Kashefipour and Falconer (2002)",
          "w/d > 50: Dl/(d*Ustar) = 10.612*(U/Ustar)^2; "
          "w/d <= 50: Dl/(d*Ustar) = (7.428 + 1.775*(w/d)^0.62*(U/Ustar)^0.572)*(U/Ustar)^2",
          _kashefipour2002, notes=("piecewise at w/d = 50",)),
    Model("zeng_huai2014", 12, "Zeng and Huai (2014)", "Dl/(d*Ustar) = 5.4*(w/d)^0.7*(U/Ustar)^1.13",
          _zeng_huai2014),
    Model("disley2014", 13, "Disley et al. (2015)",
          "Dl/(d*Ustar) = 3.563*Fr^-0.4117*(w/d)^0.6776*(U/Ustar)^1.0132, Fr = U/sqrt(g*d)", _disley2014),
    Model("sahay_dutta2009", 14, "Sahay and Dutta (2009)", "Dl/(d*Ustar) = 2*(w/d)^0.96*(U/Ustar)^1.25",
          _sahay_dutta2009),
    Model("li2013", 15, "Li et al. (2013)", "Dl/(d*Ustar) = 2.2820*(w/d)^0.7613*(U/Ustar)^1.4713", _li2013),
    Model("sattar_a", 16, "Sattar and Gharabaghi (2015), model 1",
          "Dl/(d*Ustar) = a*(w/d)^b*(U/Ustar)^c, a = 2.9*4.6^sqrt(Fr), b = 0.5 - Fr, c = 1 + sqrt(Fr)",
          _sattar_a, notes=("printed extra parameter d = -0.5 has no slot in the printed form; ignored",)),
    Model("sattar_b", 17, "Sattar and Gharabaghi (2015), model 2",
          "Dl/(d*Ustar) = 8.45*(w/d)^b*(U/Ustar)^1.65, b = 0.5 - 0.514*Fr^0.516 + (U/Ustar)*0.42^(U/Ustar)",
          _sattar_b, notes=("printed extra parameter d = 0 has no slot in the printed form; ignored",)),
    Model("wang_huai2016", 18, "Wang and Huai (2016)", "Dl/(d*Ustar) = 17.648*(w/d)^0.3619*(U/Ustar)^1.16",
          _wang_huai2016),
    Model("wang_huai2017", 19, "Wang et al. (2017)", "Dl/(d*Ustar) = (0.718 + 47.9*d/w)*U/w",
          _wang_huai2017, notes=("right-hand side as printed is not dimensionless",)),
    Model("alizadeh2017", 20, "Alizadeh et al. (2017)",
          "w/d > 28: Dl/(d*Ustar) = 9.931*(w/d)^0.187*(U/Ustar)^1.802; "
          "w/d <= 28: Dl/(d*Ustar) = 5.319*(w/d)^1.206*(U/Ustar)^0.075",
          _alizadeh2017, notes=("piecewise at w/d = 28",)),
    Model("riahi2019", 21, "Riahi-Madvar et al. (2019)",
          "Dl/(d*Ustar) = 33.99*(w/d)^0.5 + 8.497*(w/d)*(Ustar/U)^2 + 8.497*w*Ustar/(d*U) "
          "+ 16.99*w*Ustar/(d*U) + (0.0000486*(w/d)^0.5 - 0.00021)/(d^1.5*Ustar^4)*w^1.6*U^4 + 0.01478",
          _riahi2019,
          notes=("two printed lines summed; the 16.99*w*Ustar/(d*U) term repeats the "
                 "8.497*w*Ustar/(d*U) term with another coefficient (transcription ambiguity)",)),
    Model("memarzadeh_a", 22, "Memarzadeh et al. (2020), model 1",
          "w/d > 27: Dl/(d*Ustar) = (0.35 + 8.7*d/w)*(6.4 + 8*w/d)*(U/Ustar)^0.5; "
          "w/d <= 27: Dl/(d*Ustar) = 0.2694*(w/d)^2.2456",
          _memarzadeh_a, notes=("piecewise at w/d = 27",)),
    Model("memarzadeh_b", 23, "Memarzadeh et al. (2020), model 2", "Dl/(d*Ustar) = 4.5*(w/d)*(U/Ustar)^0.5",
          _memarzadeh_b),
    Model("riahi2020_a", 24, "Riahi-Madvar et al. (2020), model 1",
          "Dl = -124.74/a + 374.99/b - 517.15/c - 636.76/d + 227.59 (logistic terms in w, d, U, Ustar)",
          _riahi2020_a, None, notes=("known-poor",)),
    Model("riahi2020_b", 25, "Riahi-Madvar et al. (2020), model 2",
          "Dl = 471.22/a + 315.96/b - 306.77/c - 818.23/d - 583.71/e + 227.59 (logistic terms in w, d, U, Ustar)",
          _riahi2020_b, None, notes=("known-poor",)),
    Model("esrn_final", None, "evolutionary symbolic regression network result",
          "Dl = 13.89*w*Ustar", _esrn_final, None, ("w", "Ustar")),
]

CATALOG: dict[str, Model] = {m.id: m for m in _CATALOG}
MODEL_IDS: tuple = tuple(CATALOG)


@dataclass(frozen=True)
class Prediction:
    model: str
    Dl_pred: float
    dimensionless: Optional[float] = None
    negative: bool = False


def resolve(ids) -> list[str]:
    """Expand ``"all"`` / comma lists into validated model ids."""
    if isinstance(ids, str):
        ids = [s.strip() for s in ids.split(",") if s.strip()]
    ids = list(ids)
    if ids == ["all"]:
        return list(MODEL_IDS)
    unknown = [i for i in ids if i not in CATALOG]
    if unknown:
        raise ValueError(f"unknown model id(s): {', '.join(unknown)}")
    return ids


def predict_arrays(model_id: str, w, d, U, Ustar) -> np.ndarray:
    model = CATALOG[model_id]
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = model.func(*(np.asarray(x, dtype=float) for x in (w, d, U, Ustar)))
    out = np.asarray(out, dtype=float)
    return np.nan_to_num(out, nan=np.nan, posinf=np.finfo(float).max, neginf=-np.finfo(float).max)


def predict(model_id: str, sample) -> Prediction:
    """Predict ``Dl`` for one sample with a catalog model."""
    model = CATALOG[model_id]
    dl = float(predict_arrays(model_id, [sample.w], [sample.d], [sample.U], [sample.Ustar])[0])
    dimensionless = None
    if model.normalizer == "d*Ustar":
        dimensionless = dl / (sample.d * sample.Ustar)
    return Prediction(model_id, dl, dimensionless, dl < 0)


def predict_samples(model_id: str, samples: Sequence) -> np.ndarray:
    return predict_arrays(
        model_id,
        [s.w for s in samples],
        [s.d for s in samples],
        [s.U for s in samples],
        [s.Ustar for s in samples],
    )


def catalog_json(ids: Optional[Sequence[str]] = None) -> list[dict]:
    return [CATALOG[i].to_json() for i in (ids or MODEL_IDS)]
