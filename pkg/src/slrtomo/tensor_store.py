"""Problem data model and instance-directory I/O.

An instance directory holds (all CSV, comma-separated, no header):

* ``meta.csv``       single line ``S,M,T``
* ``routing.csv``    one line per 1-entry, ``link_index,od_index`` (1-based)
* ``linkloads.csv``  M lines of T nonnegative decimal values
* ``mask.csv``       optional; lines ``i,j`` (time-invariant zero OD) or
  ``i,j,k`` (interval-specific zero)
* ``truth.csv``      optional; N lines of T values, line n is OD index n

OD indices follow the column-stacking convention: OD pair (i, j) sits at
index n = (j-1)*S + i, so block j of the routing matrix multiplies column j
of the traffic matrix. All indices in files are 1-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, RepairError, ValidationError

__all__ = [
    "vec_index",
    "unvec_index",
    "SparsityMask",
    "RoutingMatrix",
    "TrafficTensor",
    "TomographyInstance",
    "load_instance",
    "save_instance",
    "apply_sparsity_protocol",
    "repair_anomalies",
]


def vec_index(i: int, j: int, S: int) -> int:
    """Map OD pair (i, j) to its 1-based vector index (j-1)*S + i."""
    if not (1 <= i <= S and 1 <= j <= S):
        raise ValidationError(f"OD pair ({i}, {j}) out of range for S={S}")
    return (j - 1) * S + i


def unvec_index(n: int, S: int) -> tuple[int, int]:
    """Inverse of :func:`vec_index`."""
    if not (1 <= n <= S * S):
        raise ValidationError(f"OD index {n} out of range for S={S}")
    return ((n - 1) % S + 1, (n - 1) // S + 1)


@dataclass(frozen=True)
class SparsityMask:
    """Index set of OD entries known to carry zero traffic.

    ``zero_pairs`` holds 1-based (i, j) pairs that are zero in every
    interval; ``per_interval`` holds (i, j, k) triples for zeros specific
    to interval k. The zero set of interval k is their union.
    """

    zero_pairs: frozenset = frozenset()
    per_interval: frozenset = frozenset()

    def interval_pairs(self, k: int) -> set[tuple[int, int]]:
        """All (i, j) pairs that are zero in interval k."""
        pairs = set(self.zero_pairs)
        pairs.update((i, j) for (i, j, kk) in self.per_interval if kk == k)
        return pairs

    def bool_slice(self, k: int, S: int) -> np.ndarray:
        """Boolean (S, S) array, True on the interval-k zero set."""
        out = np.zeros((S, S), dtype=bool)
        for i, j in self.interval_pairs(k):
            out[i - 1, j - 1] = True
        return out

    def bool_tensor(self, S: int, T: int) -> np.ndarray:
        """Boolean (S, S, T) array covering all intervals."""
        out = np.zeros((S, S, T), dtype=bool)
        for i, j in self.zero_pairs:
            out[i - 1, j - 1, :] = True
        for i, j, k in self.per_interval:
            out[i - 1, j - 1, k - 1] = True
        return out

    @property
    def is_empty(self) -> bool:
        return not self.zero_pairs and not self.per_interval

    def validate(self, S: int, T: int) -> None:
        for i, j in self.zero_pairs:
            if not (1 <= i <= S and 1 <= j <= S):
                raise ValidationError(f"mask pair ({i}, {j}) out of range for S={S}")
        for i, j, k in self.per_interval:
            if not (1 <= i <= S and 1 <= j <= S and 1 <= k <= T):
                raise ValidationError(
                    f"mask triple ({i}, {j}, {k}) out of range for S={S}, T={T}"
                )


@dataclass(frozen=True)
class RoutingMatrix:
    """Binary M x N routing matrix stored as its list of 1-entries.

    ``links`` and ``ods`` are parallel 0-based index arrays sorted by
    (link, od). Block j (1-based) is the column slice covering OD indices
    (j-1)*S+1 ... j*S, i.e. the links carrying traffic destined to node j.
    """

    S: int
    M: int
    links: np.ndarray
    ods: np.ndarray

    @property
    def N(self) -> int:
        return self.S * self.S

    def __post_init__(self):
        links = np.asarray(self.links, dtype=np.int64)
        ods = np.asarray(self.ods, dtype=np.int64)
        order = np.lexsort((ods, links))
        object.__setattr__(self, "links", links[order])
        object.__setattr__(self, "ods", ods[order])
        self._validate()

    def _validate(self):
        if self.S < 1 or self.M < 1:
            raise ValidationError("routing matrix needs S >= 1 and M >= 1")
        if self.links.shape != self.ods.shape:
            raise ValidationError("links and ods arrays must align")
        if self.links.size:
            if self.links.min() < 0 or self.links.max() >= self.M:
                raise ValidationError("link index out of range")
            if self.ods.min() < 0 or self.ods.max() >= self.N:
                raise ValidationError("OD index out of range")
        # a repeated (link, od) pair would make the entry 2, not binary
        keys = self.links * self.N + self.ods
        if np.unique(keys).size != keys.size:
            raise ValidationError("duplicate routing entry (entry value would exceed 1)")
        present = np.zeros(self.M, dtype=bool)
        present[self.links] = True
        if not present.all():
            missing = int(np.flatnonzero(~present)[0]) + 1
            raise ValidationError(f"routing matrix has all-zero row (link {missing})")

    @classmethod
    def from_dense(cls, entries: np.ndarray, S: int) -> "RoutingMatrix":
        entries = np.asarray(entries)
        if entries.ndim != 2 or entries.shape[1] != S * S:
            raise ValidationError("dense routing matrix must be M x S^2")
        if not np.isin(entries, (0, 1)).all():
            raise ValidationError("routing entries must be 0 or 1")
        links, ods = np.nonzero(entries)
        return cls(S=S, M=entries.shape[0], links=links, ods=ods)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.M, self.N))
        out[self.links, self.ods] = 1.0
        return out

    def block(self, j: int) -> np.ndarray:
        """Dense M x S block R_j (1-based j), columns (j-1)*S+1 ... j*S."""
        if not (1 <= j <= self.S):
            raise ValidationError(f"block index {j} out of range")
        lo, hi = (j - 1) * self.S, j * self.S
        sel = (self.ods >= lo) & (self.ods < hi)
        out = np.zeros((self.M, self.S))
        out[self.links[sel], self.ods[sel] - lo] = 1.0
        return out


@dataclass(frozen=True)
class TrafficTensor:
    """Nonnegative S x S x T traffic volumes; slice k is values[:, :, k-1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] != values.shape[1]:
            raise ValidationError("traffic tensor must have shape (S, S, T)")
        if not np.isfinite(values).all():
            raise ValidationError("traffic tensor has non-finite entries")
        if values.min(initial=0.0) < 0:
            raise ValidationError("traffic tensor has negative entries")
        object.__setattr__(self, "values", values)

    @property
    def S(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[2]

    def interval(self, k: int) -> np.ndarray:
        """Spatial matrix X^(k), 1-based k."""
        return self.values[:, :, k - 1]

    def check_mask(self, mask: SparsityMask) -> None:
        zeros = mask.bool_tensor(self.S, self.T)
        if np.any(self.values[zeros] != 0.0):
            raise ValidationError("traffic tensor is nonzero on masked entries")


@dataclass(frozen=True)
class TomographyInstance:
    """One network tomography problem: routing, link loads, known zeros.

    Immutable after validation; safe to share read-only across concurrent
    solver runs.
    """

    S: int
    M: int
    T: int
    routing: RoutingMatrix
    link_loads: np.ndarray
    mask: SparsityMask = field(default_factory=SparsityMask)
    truth: TrafficTensor | None = None

    @property
    def N(self) -> int:
        return self.S * self.S

    def __post_init__(self):
        loads = np.asarray(self.link_loads, dtype=np.float64)
        object.__setattr__(self, "link_loads", loads)
        if self.routing.S != self.S or self.routing.M != self.M:
            raise ValidationError("routing matrix dimensions disagree with meta")
        if loads.shape != (self.M, self.T):
            raise ValidationError(
                f"link_loads must be {self.M} x {self.T}, got {loads.shape}"
            )
        if not np.isfinite(loads).all():
            raise ValidationError("link_loads has non-finite entries")
        if loads.size and loads.min() < 0:
            raise ValidationError("link_loads has negative entries")
        if self.S > self.M + 1:
            raise ValidationError(
                f"scale relation violated: S={self.S} > M+1={self.M + 1}"
            )
        if self.M + 1 >= self.N:
            # Fully measured instances (e.g. identity routing) are legal but
            # outside the model's intended regime.
            warnings.warn(
                f"instance is not underdetermined (M+1={self.M + 1} >= N={self.N})",
                UserWarning,
                stacklevel=2,
            )
        self.mask.validate(self.S, self.T)
        if self.truth is not None:
            if self.truth.S != self.S or self.truth.T != self.T:
                raise ValidationError("truth tensor dimensions disagree with meta")
            self.truth.check_mask(self.mask)


# ---------------------------------------------------------------------------
# instance directory I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_fields(path: Path, lineno: int, line: str) -> list[str]:
    fields = [f.strip() for f in line.strip().split(",")]
    if any(not f for f in fields):
        raise ParseError(f"{path.name}:{lineno}: empty field")
    return fields


def _parse_int(path: Path, lineno: int, token: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{path.name}:{lineno}: expected integer, got {token!r}") from None


def _parse_float(path: Path, lineno: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{path.name}:{lineno}: expected number, got {token!r}") from None
    if not np.isfinite(value):
        raise ParseError(f"{path.name}:{lineno}: non-finite value {token!r}")
    return value


def _read_matrix(path: Path, rows: int, cols: int, nonneg: bool) -> np.ndarray:
    out = np.empty((rows, cols))
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) != rows:
        raise ParseError(f"{path.name}: expected {rows} rows, found {len(lines)}")
    for r, line in enumerate(lines):
        fields = _parse_fields(path, r + 1, line)
        if len(fields) != cols:
            raise ParseError(
                f"{path.name}:{r + 1}: expected {cols} values, found {len(fields)}"
            )
        for c, tok in enumerate(fields):
            v = _parse_float(path, r + 1, tok)
            if nonneg and v < 0:
                raise ParseError(f"{path.name}:{r + 1}: negative value {tok}")
            out[r, c] = v
    return out


def load_instance(dir_path) -> TomographyInstance:
    """Load and validate a tomography instance from a directory."""
    root = Path(dir_path)
    if not root.is_dir():
        raise ParseError(f"instance directory not found: {root}")

    meta_path = root / "meta.csv"
    if not meta_path.is_file():
        raise ParseError("meta.csv: file missing")
    meta_line = meta_path.read_text().strip()
    fields = _parse_fields(meta_path, 1, meta_line)
    if len(fields) != 3:
        raise ParseError("meta.csv:1: expected S,M,T")
    S, M, T = (_parse_int(meta_path, 1, f) for f in fields)

    routing_path = root / "routing.csv"
    if not routing_path.is_file():
        raise ParseError("routing.csv: file missing")
    links, ods = [], []
    with open(routing_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = _parse_fields(routing_path, lineno, line)
            if len(fields) != 2:
                raise ParseError(f"routing.csv:{lineno}: expected link_index,od_index")
            m = _parse_int(routing_path, lineno, fields[0])
            n = _parse_int(routing_path, lineno, fields[1])
            if not (1 <= m <= M):
                raise ParseError(f"routing.csv:{lineno}: link index {m} out of range")
            if not (1 <= n <= S * S):
                raise ParseError(f"routing.csv:{lineno}: od index {n} out of range")
            links.append(m - 1)
            ods.append(n - 1)
    try:
        routing = RoutingMatrix(S=S, M=M, links=np.array(links, dtype=np.int64),
                                ods=np.array(ods, dtype=np.int64))
    except ValidationError as exc:
        raise ParseError(f"routing.csv: {exc}") from exc

    loads_path = root / "linkloads.csv"
    if not loads_path.is_file():
        raise ParseError("linkloads.csv: file missing")
    loads = _read_matrix(loads_path, M, T, nonneg=True)

    mask = SparsityMask()
    mask_path = root / "mask.csv"
    if mask_path.is_file():
        pairs, triples = [], []
        with open(mask_path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                fields = _parse_fields(mask_path, lineno, line)
                if len(fields) == 2:
                    pairs.append((_parse_int(mask_path, lineno, fields[0]),
                                  _parse_int(mask_path, lineno, fields[1])))
                elif len(fields) == 3:
                    triples.append(tuple(_parse_int(mask_path, lineno, f) for f in fields))
                else:
                    raise ParseError(f"mask.csv:{lineno}: expected i,j or i,j,k")
        mask = SparsityMask(zero_pairs=frozenset(pairs), per_interval=frozenset(triples))

    truth = None
    truth_path = root / "truth.csv"
    if truth_path.is_file():
        flat = _read_matrix(truth_path, S * S, T, nonneg=True)
        # line n is OD (i, j) with n = (j-1)*S + i: column-stacking order
        truth = TrafficTensor(flat.reshape(S, S, T, order="F"))

    try:
        return TomographyInstance(S=S, M=M, T=T, routing=routing,
                                  link_loads=loads, mask=mask, truth=truth)
    except ValidationError as exc:
        raise ValidationError(f"{root}: {exc}") from exc


def save_instance(instance: TomographyInstance, dir_path) -> Path:
    """Write an instance directory; numeric values round-trip bit-exactly."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.csv").write_text(f"{instance.S},{instance.M},{instance.T}\n")

    lines = [
        f"{m + 1},{n + 1}"
        for m, n in zip(instance.routing.links, instance.routing.ods)
    ]
    (root / "routing.csv").write_text("\n".join(lines) + "\n")

    rows = [",".join(_fmt(v) for v in row) for row in instance.link_loads]
    (root / "linkloads.csv").write_text("\n".join(rows) + "\n")

    if not instance.mask.is_empty:
        entries = [f"{i},{j}" for i, j in sorted(instance.mask.zero_pairs)]
        entries += [f"{i},{j},{k}" for i, j, k in sorted(instance.mask.per_interval)]
        (root / "mask.csv").write_text("\n".join(entries) + "\n")

    if instance.truth is not None:
        flat = instance.truth.values.reshape(instance.N, instance.T, order="F")
        rows = [",".join(_fmt(v) for v in row) for row in flat]
        (root / "truth.csv").write_text("\n".join(rows) + "\n")
    return root


# ---------------------------------------------------------------------------
# preprocessing


def apply_sparsity_protocol(truth: TrafficTensor, p: float) -> SparsityMask:
    """Mask the smallest p percent of OD pairs by aggregate volume.

    Pairs are ranked by total volume over all intervals, ascending; the
    lowest floor(p*N/100) enter the mask. Ties break by OD index ascending,
    so the protocol is deterministic and monotone in p.
    """
    if not (0 <= p < 100):
        raise ValidationError(f"sparsity percent must be in [0, 100), got {p}")
    S, N = truth.S, truth.S * truth.S
    totals = truth.values.sum(axis=2)  # (S, S)
    # column-stacking order matches vec_index
    flat = totals.ravel(order="F")
    od_idx = np.arange(1, N + 1)
    order = np.lexsort((od_idx, flat))
    count = int(np.floor(p * N / 100.0))
    chosen = order[:count]
    pairs = frozenset(unvec_index(int(n) + 1, S) for n in chosen)
    return SparsityMask(zero_pairs=pairs)


def repair_anomalies(link_loads: np.ndarray, threshold_factor: float) -> np.ndarray:
    """Replace anomalous intervals of a load series by linear interpolation.

    An interval is flagged when its column norm exceeds threshold_factor
    times the median column norm. Interior runs of flagged intervals are
    replaced column-wise by the line between the surrounding clean columns;
    runs touching a boundary are replaced by the nearest clean column.
    Clean columns are never altered.
    """
    loads = np.asarray(link_loads, dtype=np.float64)
    if loads.ndim != 2 or loads.shape[1] < 3:
        raise ValidationError("repair needs an M x T matrix with T >= 3")
    if threshold_factor <= 1:
        raise ValidationError("threshold_factor must exceed 1")
    norms = np.linalg.norm(loads, axis=0)
    flagged = norms > threshold_factor * np.median(norms)
    if flagged.all():
        raise RepairError("every interval is flagged anomalous; nothing to interpolate from")
    if not flagged.any():
        return loads.copy()

    out = loads.copy()
    T = loads.shape[1]
    clean = np.flatnonzero(~flagged)
    t = 0
    while t < T:
        if not flagged[t]:
            t += 1
            continue
        start = t
        while t < T and flagged[t]:
            t += 1
        end = t  # run is [start, end)
        left = start - 1 if start > 0 else None
        right = end if end < T else None
        if left is not None and right is not None:
            span = right - left
            for s in range(start, end):
                w = (s - left) / span
                out[:, s] = (1.0 - w) * loads[:, left] + w * loads[:, right]
        else:
            anchor = right if left is None else left
            if anchor is None:  # unreachable: not all columns flagged
                anchor = int(clean[0])
            out[:, start:end] = loads[:, [anchor]]
    return out
