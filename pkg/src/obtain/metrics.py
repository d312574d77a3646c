"""Beat tracking evaluation: P-score, F-measure and the continuity metrics
CML_c, CML_t, AML_c, AML_t.

Subscript ``c`` is the longest continuously correct run, ``t`` the total
number of correct beats, both divided by the number of reference beats.
AML takes the best value over the allowed metrical variations of the
reference: original, double, both half-tempo phases and off-beat.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EvaluationError, ParameterError


@dataclass(frozen=True)
class EvalConfig:
    tempo_tolerance: float = 0.175
    phase_tolerance: float = 0.25
    fmeasure_window: float = 0.175
    skip_sec: float = 5.0
    skip_transient: bool = False

    def __post_init__(self):
        for name in ("tempo_tolerance", "phase_tolerance", "fmeasure_window"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        if self.skip_sec < 0:
            raise ParameterError("skip_sec must be >= 0")


@dataclass(frozen=True)
class MatchCounts:
    b: int
    p: int
    n: int


@dataclass
class EvalReport:
    cml_c: float
    cml_t: float
    aml_c: float
    aml_t: float
    p_score: float
    f_measure: float

    def as_dict(self, ndigits=4):
        return {k: round(float(v), ndigits) for k, v in asdict(self).items()}

    def to_json(self):
        return json.dumps(self.as_dict())

    @property
    def average(self):
        return float(np.mean(list(asdict(self).values())))


def _as_beats(x, name):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size and (np.any(x < 0) or np.any(np.diff(x) <= 0)):
        raise EvaluationError(f"{name} beats must be non-negative and strictly increasing")
    return x


def _prepare(detected, reference, cfg):
    detected = _as_beats(detected, "detected")
    reference = _as_beats(reference, "reference")
    if cfg.skip_transient:
        detected = detected[detected >= cfg.skip_sec]
        reference = reference[reference >= cfg.skip_sec]
    return detected, reference


def _intervals(reference):
    """Local inter-annotation interval per reference beat (previous gap;
    the first beat uses the following gap)."""
    if reference.size < 2:
        raise EvaluationError("at least two reference beats are needed")
    d = np.diff(reference)
    return np.concatenate([d[:1], d])


def match_beats(detected, reference, cfg=EvalConfig()):
    """One-to-one greedy matching by ascending distance inside the
    ``fmeasure_window`` tolerance."""
    detected, reference = _prepare(detected, reference, cfg)
    if reference.size == 0:
        raise EvaluationError("reference beat sequence is empty")
    if reference.size == 1:
        raise EvaluationError("at least two reference beats are needed")
    win = cfg.fmeasure_window * _intervals(reference)
    if detected.size == 0:
        return MatchCounts(0, 0, int(reference.size))
    dist = np.abs(detected[:, None] - reference[None, :])
    di, ri = np.nonzero(dist <= win[None, :] + 1e-12)
    order = np.lexsort((di, ri, dist[di, ri]))
    used_d = set()
    used_r = set()
    b = 0
    for k in order:
        i, j = int(di[k]), int(ri[k])
        if i in used_d or j in used_r:
            continue
        used_d.add(i)
        used_r.add(j)
        b += 1
    return MatchCounts(b, int(detected.size) - b, int(reference.size) - b)


def p_score(counts):
    b, p, n = counts.b, counts.p, counts.n
    denom = b + max(p, n)
    if denom == 0:
        raise EvaluationError("P-score undefined: no beats at all")
    return b / denom


def f_measure(counts):
    b, p, n = counts.b, counts.p, counts.n
    denom = b + (p + n) / 2.0
    if denom == 0:
        raise EvaluationError("F-measure undefined: no beats at all")
    return b / denom


def _continuity(detected, reference, cfg, phase_tolerance=None):
    """(longest run, total correct) as fractions of len(reference)."""
    theta = cfg.phase_tolerance if phase_tolerance is None else phase_tolerance
    n_ref = reference.size
    if detected.size == 0:
        return 0.0, 0.0
    iai = _intervals(reference)
    nearest = np.abs(detected[:, None] - reference[None, :]).argmin(axis=0)
    phase_ok = np.abs(detected[nearest] - reference) <= theta * iai + 1e-12
    member = phase_ok.copy()
    for j in range(n_ref):
        i = nearest[j]
        if member[j] and i > 0 and j > 0:
            ibi = detected[i] - detected[i - 1]
            member[j] = abs(ibi - iai[j]) <= cfg.tempo_tolerance * iai[j] + 1e-12
    longest = run = total = 0
    for j in range(n_ref):
        if not member[j]:
            run = 0
            continue
        total += 1
        linked = j > 0 and member[j - 1] and nearest[j] == nearest[j - 1] + 1
        run = run + 1 if linked else 1
        longest = max(longest, run)
    return longest / n_ref, total / n_ref


def metrical_variations(reference):
    """Reference sequences at the allowed metrical levels."""
    reference = np.asarray(reference, dtype=np.float64)
    mids = reference[:-1] + np.diff(reference) / 2.0
    double = np.empty(reference.size + mids.size)
    double[0::2] = reference
    double[1::2] = mids
    return {
        "original": reference,
        "double": double,
        "half_even": reference[0::2],
        "half_odd": reference[1::2],
        "offbeat": mids,
    }


def continuity_metrics(detected, reference, cfg=EvalConfig(), phase_tolerance=None):
    """Return ``(cml_c, cml_t, aml_c, aml_t)``."""
    detected, reference = _prepare(detected, reference, cfg)
    if reference.size < 2:
        raise EvaluationError("at least two reference beats are needed")
    cml_c, cml_t = _continuity(detected, reference, cfg, phase_tolerance)
    aml_c, aml_t = cml_c, cml_t
    for name, ref in metrical_variations(reference).items():
        if name == "original" or ref.size < 2:
            continue
        c, t = _continuity(detected, ref, cfg, phase_tolerance)
        aml_c = max(aml_c, c)
        aml_t = max(aml_t, t)
    return cml_c, cml_t, aml_c, aml_t


def evaluate(detected, reference, cfg=EvalConfig()):
    counts = match_beats(detected, reference, cfg)
    cml_c, cml_t, aml_c, aml_t = continuity_metrics(detected, reference, cfg)
    return EvalReport(cml_c, cml_t, aml_c, aml_t, p_score(counts), f_measure(counts))


def tolerance_sweep(detected, reference, tolerances, cfg=EvalConfig()):
    """Rows ``(tolerance, cml_t, cml_c, aml_t, aml_c)`` per phase tolerance."""
    rows = []
    for tol in tolerances:
        cml_c, cml_t, aml_c, aml_t = continuity_metrics(detected, reference, cfg, float(tol))
        rows.append((float(tol), cml_t, cml_c, aml_t, aml_c))
    return rows


def sweep_csv(rows):
    lines = ["tolerance,cml_t,cml_c,aml_t,aml_c"]
    for row in rows:
        lines.append(",".join(f"{v:.4f}" for v in row))
    return "\n".join(lines) + "\n"


def read_annotations(path):
    """One beat time per line; blank lines and ``#`` comments skipped.

    Only the first whitespace/comma-separated field is used, so two-column
    (time, beat-position) files load too.
    """
    times = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            field0 = s.replace(",", " ").split()[0]
            try:
                times.append(float(field0))
            except ValueError:
                raise EvaluationError(f"{path}:{lineno}: cannot parse beat time {field0!r}") from None
    return np.asarray(times)
