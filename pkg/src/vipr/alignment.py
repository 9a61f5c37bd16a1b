"""Multiple sequence alignment ingestion and site-pattern compression.

Characters outside {A, C, G, T} (gaps, Ns, ?, IUPAC ambiguity codes) are
mapped to a single MISSING code and treated as "all states possible" by the
likelihood. Identical columns are collapsed into weighted patterns; the
engine always works on compressed patterns, which preserves the likelihood
exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .subst_model import BASES

MISSING = 4

_CODE_OF = {c: i for i, c in enumerate(BASES)}


class AlignmentError(ValueError):
    """Raised for malformed FASTA input or inconsistent alignment data."""


@dataclass(frozen=True)
class Alignment:
    """An N-taxon alignment stored as weighted unique site patterns.

    taxa:          ordered taxon names; row order fixes taxon ids
    patterns:      (n_patterns, N) uint8 array of codes, 0..3 = ACGT, 4 = MISSING
    pattern_weights: occurrence count per unique pattern
    pattern_index: original site -> pattern id, len M
    """

    taxa: tuple[str, ...]
    patterns: np.ndarray
    pattern_weights: np.ndarray
    pattern_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.taxa) < 2:
            raise AlignmentError("alignment needs at least 2 taxa")
        if len(set(self.taxa)) != len(self.taxa) or any(not t for t in self.taxa):
            raise AlignmentError("taxa names must be unique and nonempty")
        if self.patterns.ndim != 2 or self.patterns.shape[1] != len(self.taxa):
            raise AlignmentError("patterns must be (n_patterns, n_taxa)")
        if self.patterns.size and not (
            (self.patterns <= MISSING).all() and (self.patterns >= 0).all()
        ):
            raise AlignmentError("character codes must lie in 0..4")
        if int(self.pattern_weights.sum()) != len(self.pattern_index):
            raise AlignmentError("pattern weights must sum to the site count")

    @property
    def n_taxa(self) -> int:
        return len(self.taxa)

    @property
    def n_sites(self) -> int:
        return len(self.pattern_index)

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    def site(self, m: int) -> np.ndarray:
        """Column m of the original alignment as a length-N code vector."""
        return self.patterns[self.pattern_index[m]]

    def sites(self) -> np.ndarray:
        """The full (M, N) matrix of original columns."""
        return self.patterns[self.pattern_index]

    def summary(self) -> dict:
        return {
            "taxa": list(self.taxa),
            "n_sites": self.n_sites,
            "n_patterns": self.n_patterns,
        }


def from_codes(taxa, codes, compress: bool = True) -> Alignment:
    """Build an Alignment from an (N, M) array of character codes.

    With compress=False every column becomes its own pattern (weight 1),
    which is only useful for debugging the compression itself.
    """
    codes = np.asarray(codes, dtype=np.uint8)
    if codes.ndim != 2:
        raise AlignmentError("codes must be a 2-D (n_taxa, n_sites) array")
    columns = codes.T
    m = columns.shape[0]
    if compress and m > 0:
        uniq, index = np.unique(columns, axis=0, return_inverse=True)
        weights = np.bincount(index, minlength=uniq.shape[0])
        return Alignment(tuple(taxa), uniq, weights, index.astype(np.int64))
    return Alignment(
        tuple(taxa),
        columns.copy(),
        np.ones(m, dtype=np.int64),
        np.arange(m, dtype=np.int64),
    )


def parse_fasta(text, compress: bool = True) -> Alignment:
    """Parse FASTA text (str or bytes) into an Alignment.

    Records start at '>' lines; sequence lines may wrap and are read
    case-insensitively. Any character that is not A/C/G/T becomes MISSING.
    Errors report the offending taxon and line number.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    names: list[str] = []
    seqs: list[list[int]] = []
    name_line: dict[str, int] = {}
    current: list[int] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            name = line[1:].strip()
            if not name:
                raise AlignmentError(f"empty taxon name at line {lineno}")
            if name in name_line:
                raise AlignmentError(
                    f"duplicate taxon name {name!r} at line {lineno}"
                    f" (first seen at line {name_line[name]})"
                )
            name_line[name] = lineno
            current = []
            names.append(name)
            seqs.append(current)
        else:
            if current is None:
                raise AlignmentError(f"sequence data before any '>' header at line {lineno}")
            for ch in line.upper():
                current.append(_CODE_OF.get(ch, MISSING))
    if not names:
        raise AlignmentError("empty FASTA input")
    if len(names) < 2:
        raise AlignmentError("alignment needs at least 2 taxa")
    lengths = {len(s) for s in seqs}
    if len(lengths) > 1:
        detail = ", ".join(f"{n}: {len(s)}" for n, s in zip(names, seqs))
        raise AlignmentError(f"unequal sequence lengths ({detail})")
    m = lengths.pop()
    if m == 0:
        raise AlignmentError("sequences are empty")
    codes = np.array(seqs, dtype=np.uint8)
    return from_codes(names, codes, compress=compress)


def to_fasta(a: Alignment, width: int = 70) -> str:
    """Serialize back to FASTA; MISSING is written as '-'."""
    symbols = BASES + "-"
    out = []
    mat = a.sites()
    for i, name in enumerate(a.taxa):
        out.append(f">{name}")
        seq = "".join(symbols[c] for c in mat[:, i])
        for start in range(0, len(seq), width):
            out.append(seq[start : start + width])
        if not seq:
            out.append("")
    return "\n".join(out) + "\n"


def drop_constant_sites(a: Alignment) -> Alignment:
    """Remove columns whose non-MISSING characters are all identical.

    An all-MISSING column counts as constant. Returns a new Alignment with
    recomputed patterns; the result may have zero sites, which is flagged
    with a warning because the likelihood of such an alignment is trivially 1.
    """
    cols = a.sites()
    keep = []
    for m in range(cols.shape[0]):
        observed = cols[m][cols[m] != MISSING]
        if observed.size and not (observed == observed[0]).all():
            keep.append(m)
    kept = cols[keep].T if keep else np.empty((a.n_taxa, 0), dtype=np.uint8)
    if not keep:
        warnings.warn("all sites are constant; resulting alignment has 0 sites")
    return from_codes(a.taxa, kept)
