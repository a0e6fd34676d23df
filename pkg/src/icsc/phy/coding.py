"""Binary convolutional code (K=7, generators 133/171 octal) with puncturing.

The mother code is rate 1/2. Coded bits are serialized as [A0, B0, A1, B1, ...]
where A comes from generator 133 and B from 171. Higher rates are obtained by
puncturing the serialized stream with the 802.11 patterns.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np
from numba import njit

CONSTRAINT_LENGTH = 7
N_STATES = 1 << (CONSTRAINT_LENGTH - 1)
N_TAIL = CONSTRAINT_LENGTH - 1
G0 = 0o133
G1 = 0o171

# keep-masks over the serialized mother stream, one period each
PUNCTURE_PATTERNS: dict[Fraction, np.ndarray] = {
    Fraction(1, 2): np.array([1, 1], dtype=bool),
    Fraction(2, 3): np.array([1, 1, 1, 0], dtype=bool),
    Fraction(3, 4): np.array([1, 1, 1, 0, 0, 1], dtype=bool),
    Fraction(5, 6): np.array([1, 1, 1, 0, 0, 1, 1, 0, 0, 1], dtype=bool),
}

# LLRs beyond this magnitude carry no extra information and would overflow sums
_LLR_CLIP = 1e9


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


def _build_output_table() -> np.ndarray:
    """out[state, bit] -> 2-bit code word (A << 1 | B)."""
    out = np.zeros((N_STATES, 2), dtype=np.int64)
    for state in range(N_STATES):
        for bit in range(2):
            reg = (bit << (CONSTRAINT_LENGTH - 1)) | state
            out[state, bit] = (_parity(reg & G0) << 1) | _parity(reg & G1)
    return out


_OUTPUT = _build_output_table()


def as_rate(code_rate) -> Fraction:
    rate = Fraction(code_rate).limit_denominator(16)
    if rate not in PUNCTURE_PATTERNS:
        raise ValueError(f"unsupported code rate {code_rate!r}; expected one of "
                         f"{sorted(str(r) for r in PUNCTURE_PATTERNS)}")
    return rate


def puncture_mask(n_mother: int, code_rate) -> np.ndarray:
    """Boolean keep-mask for a mother stream of ``n_mother`` bits."""
    pattern = PUNCTURE_PATTERNS[as_rate(code_rate)]
    reps = -(-n_mother // pattern.size)
    return np.tile(pattern, reps)[:n_mother]


def coded_length(n_info: int, code_rate) -> int:
    """Number of transmitted bits for ``n_info`` message bits (tail included)."""
    return int(puncture_mask(2 * (n_info + N_TAIL), code_rate).sum())


@njit(cache=True)
def _encode_mother(bits, out_table):
    n = bits.size
    coded = np.empty(2 * n, dtype=np.uint8)
    state = 0
    for i in range(n):
        b = bits[i]
        word = out_table[state, b]
        coded[2 * i] = (word >> 1) & 1
        coded[2 * i + 1] = word & 1
        state = (b << 5) | (state >> 1)
    return coded


def encode_bcc(bits, code_rate=Fraction(1, 2)) -> np.ndarray:
    """Encode ``bits``, append 6 zero tail bits, then puncture to ``code_rate``."""
    rate = as_rate(code_rate)
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size and bits.max() > 1:
        raise ValueError("bits must be 0/1")
    padded = np.concatenate([bits, np.zeros(N_TAIL, dtype=np.uint8)])
    mother = _encode_mother(padded, _OUTPUT)
    return mother[puncture_mask(mother.size, rate)]


@njit(cache=True)
def _viterbi(llr, out_table, n_steps):
    # metric: sum over coded bits of (1 - 2c) * llr, maximized
    neg_inf = -1e300
    metric = np.full(N_STATES, neg_inf)
    metric[0] = 0.0
    decisions = np.zeros((n_steps, N_STATES), dtype=np.uint8)
    new_metric = np.empty(N_STATES)
    for t in range(n_steps):
        la = llr[2 * t]
        lb = llr[2 * t + 1]
        for ns in range(N_STATES):
            bit = ns >> 5
            base = (ns & 31) << 1
            best = neg_inf
            choice = 0
            # predecessors in ascending order; strict '>' keeps the lowest index on ties
            for x in range(2):
                ps = base | x
                m = metric[ps]
                if m == neg_inf:
                    continue
                word = out_table[ps, bit]
                ca = (word >> 1) & 1
                cb = word & 1
                m += (1 - 2 * ca) * la + (1 - 2 * cb) * lb
                if m > best:
                    best = m
                    choice = x
            new_metric[ns] = best
            decisions[t, ns] = choice
        for s in range(N_STATES):
            metric[s] = new_metric[s]
    out = np.empty(n_steps, dtype=np.uint8)
    state = 0
    for t in range(n_steps - 1, -1, -1):
        out[t] = state >> 5
        state = ((state & 31) << 1) | decisions[t, state]
    return out


def depuncture(llrs, code_rate, n_info: int) -> np.ndarray:
    """Scatter received LLRs back onto the mother stream; punctured slots get 0."""
    n_mother = 2 * (n_info + N_TAIL)
    mask = puncture_mask(n_mother, code_rate)
    llrs = np.asarray(llrs, dtype=float).reshape(-1)
    if llrs.size != mask.sum():
        raise ValueError(f"expected {int(mask.sum())} LLRs for {n_info} info bits at "
                         f"rate {as_rate(code_rate)}, got {llrs.size}")
    full = np.zeros(n_mother)
    full[mask] = llrs
    return full


def viterbi_decode(soft_llrs, code_rate, n_info: int) -> np.ndarray:
    """Maximum-likelihood decoding over the 64-state trellis.

    LLR sign convention: positive favours bit 0. The trellis starts and is
    terminated in the all-zero state; ties resolve to the lowest-index
    predecessor.
    """
    full = np.clip(depuncture(soft_llrs, code_rate, n_info), -_LLR_CLIP, _LLR_CLIP)
    decoded = _viterbi(full, _OUTPUT, n_info + N_TAIL)
    return decoded[:n_info]
