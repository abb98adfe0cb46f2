"""Integer arithmetic coding over explicit per-symbol probability tables.

Classic 32-bit low/high range coding with underflow (pending-bit) handling,
bit-level output padded to whole bytes. Probabilities are quantized to
frequencies summing to 2^16 with a floor of 1 per symbol so every symbol
stays decodable. Also provides fixed-length-code (FLC) accounting and
packing for the non-entropy-coded comparison mode.

The bit-exact flush and byte order are documented in docs/FORMAT.md and
pinned by golden fixtures.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CorruptStream, InvalidInput

TOTAL = 1 << 16

_STATE_BITS = 32
_MAX = (1 << _STATE_BITS) - 1
_HALF = 1 << (_STATE_BITS - 1)
_QUARTER = 1 << (_STATE_BITS - 2)
_THREE_QUARTERS = _HALF + _QUARTER


@dataclass(frozen=True)
class SymbolModel:
    """Quantized probability table: cum_freq[0]=0 .. cum_freq[M]=2^16."""

    cum_freq: tuple

    @property
    def cardinality(self) -> int:
        return len(self.cum_freq) - 1

    @classmethod
    def from_probabilities(cls, probs) -> "SymbolModel":
        """Quantize probabilities by largest-remainder rounding to 2^16.

        Every symbol is floored at frequency 1; the resulting deficit or
        surplus is balanced without breaking the probability ranking.
        """
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise InvalidInput("need a 1-D probability vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidInput("probabilities must be finite and non-negative")
        if p.size > TOTAL:
            raise InvalidInput("alphabet larger than the frequency total")
        s = p.sum()
        if s <= 0:
            raise InvalidInput("probabilities must not all be zero")
        ideal = p / s * TOTAL
        freq = np.maximum(1, np.floor(ideal).astype(np.int64))
        diff = TOTAL - int(freq.sum())
        if diff > 0:
            # hand out the surplus by largest remainder (ties: lower index);
            # the remainder is measured against the assigned frequency so
            # entries floored up to 1 cannot overtake larger ones
            rem = ideal - freq
            order = np.lexsort((np.arange(p.size), -rem))
            freq[order[:diff]] += 1
        while diff < 0:
            # flooring overshot: shave a largest frequency, preferring the
            # lowest-probability entry among equals to preserve ranking
            fmax = freq.max()
            candidates = np.flatnonzero(freq == fmax)
            idx = candidates[np.argmin(ideal[candidates])]
            freq[idx] -= 1
            diff += 1
        cum = np.concatenate(([0], np.cumsum(freq)))
        return cls(cum_freq=tuple(int(v) for v in cum))


class _BitWriter:
    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, bit: int):
        self.acc = (self.acc << 1) | bit
        self.nbits += 1
        if self.nbits == 8:
            self.buf.append(self.acc)
            self.acc = 0
            self.nbits = 0

    def getvalue(self) -> bytes:
        if self.nbits:
            self.buf.append(self.acc << (8 - self.nbits))
            self.acc = 0
            self.nbits = 0
        return bytes(self.buf)


class _BitReader:
    """MSB-first reader allowing up to _STATE_BITS of zero padding."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.limit = 8 * len(data) + _STATE_BITS

    def read(self) -> int:
        if self.pos >= self.limit:
            raise CorruptStream("bitstream exhausted")
        byte_idx = self.pos >> 3
        if byte_idx < len(self.data):
            bit = (self.data[byte_idx] >> (7 - (self.pos & 7))) & 1
        else:
            bit = 0
        self.pos += 1
        return bit


class ArithmeticEncoder:
    """Single-use encoder; call encode() per symbol, then finish()."""

    def __init__(self):
        self.low = 0
        self.high = _MAX
        self.pending = 0
        self.out = _BitWriter()

    def encode(self, symbol: int, model: SymbolModel):
        cum = model.cum_freq
        if not 0 <= symbol < model.cardinality:
            raise InvalidInput("symbol outside model alphabet")
        span = self.high - self.low + 1
        total = cum[-1]
        self.high = self.low + (span * cum[symbol + 1]) // total - 1
        self.low = self.low + (span * cum[symbol]) // total
        while True:
            if self.high < _HALF:
                self._emit(0)
            elif self.low >= _HALF:
                self._emit(1)
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _THREE_QUARTERS:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1

    def _emit(self, bit: int):
        self.out.write(bit)
        while self.pending:
            self.out.write(bit ^ 1)
            self.pending -= 1

    def finish(self) -> bytes:
        # one disambiguating bit; the decoder zero-pads the rest
        self.pending += 1
        self._emit(0 if self.low < _QUARTER else 1)
        return self.out.getvalue()


class ArithmeticDecoder:
    """Single-use decoder over one encoded byte string."""

    def __init__(self, data: bytes):
        self.reader = _BitReader(data)
        self.low = 0
        self.high = _MAX
        self.code = 0
        for _ in range(_STATE_BITS):
            self.code = (self.code << 1) | self.reader.read()

    def decode(self, model: SymbolModel) -> int:
        cum = model.cum_freq
        total = cum[-1]
        span = self.high - self.low + 1
        value = ((self.code - self.low + 1) * total - 1) // span
        # binary search for the symbol with cum[s] <= value < cum[s+1]
        lo, hi = 0, model.cardinality - 1
        while lo < hi:
            mid = (lo + hi + 1) >> 1
            if cum[mid] <= value:
                lo = mid
            else:
                hi = mid - 1
        symbol = lo
        self.high = self.low + (span * cum[symbol + 1]) // total - 1
        self.low = self.low + (span * cum[symbol]) // total
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.code -= _HALF
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _THREE_QUARTERS:
                self.code -= _QUARTER
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.code = (self.code << 1) | self.reader.read()
        return symbol


def ac_encode(pairs) -> bytes:
    """Encode a sequence of (symbol, SymbolModel) pairs into bytes."""
    enc = ArithmeticEncoder()
    for symbol, model in pairs:
        enc.encode(int(symbol), model)
    return enc.finish()


def ac_decode(data: bytes, models) -> list:
    """Decode one symbol per model from bytes produced by ac_encode.

    The model sequence must match the encoder's exactly; a mismatch yields
    undefined symbol content (never unsafe behavior). Truncation is detected
    when the decoder runs past the padded end of the stream.
    """
    dec = ArithmeticDecoder(data)
    return [dec.decode(model) for model in models]


# ---------------------------------------------------------------------- FLC

def flc_bits(levels, k: int) -> int:
    """Fixed-length-code size: ceil(log2 K) + ceil(log2 prod(L_n)) bits."""
    if k < 1:
        raise InvalidInput("component count must be >= 1")
    prod = 1
    for L in np.asarray(levels).ravel():
        L = int(L)
        if L < 1:
            raise InvalidInput("level counts must be >= 1")
        prod *= L
    return (k - 1).bit_length() + (prod - 1).bit_length()


def flc_pack(mode: int, k: int, indices, levels) -> bytes:
    """Pack the mode index and a mixed-radix coefficient integer.

    Layout: value = mode + 2^ceil(log2 K) * sum_n j_n * prod_{m<n} L_m,
    serialized little-endian in ceil(bits / 8) bytes.
    """
    levels = [int(L) for L in np.asarray(levels).ravel()]
    indices = [int(j) for j in np.asarray(indices).ravel()]
    if len(indices) != len(levels):
        raise InvalidInput("indices and levels must align")
    value = 0
    radix = 1
    for j, L in zip(indices, levels):
        if not 0 <= j < L:
            raise InvalidInput("index outside its radix")
        value += j * radix
        radix *= L
    kbits = (k - 1).bit_length()
    nbits = flc_bits(levels, k)
    packed = mode + (value << kbits)
    return packed.to_bytes((nbits + 7) // 8, "little")


def flc_unpack(data: bytes, k: int, levels):
    """Inverse of flc_pack given the same K and level counts."""
    levels = [int(L) for L in np.asarray(levels).ravel()]
    nbits = flc_bits(levels, k)
    if len(data) < (nbits + 7) // 8:
        raise CorruptStream("FLC segment too short")
    packed = int.from_bytes(data, "little")
    kbits = (k - 1).bit_length()
    mode = packed & ((1 << kbits) - 1)
    value = packed >> kbits
    if mode >= k:
        raise CorruptStream("FLC mode index out of range")
    indices = []
    for L in levels:
        indices.append(value % L)
        value //= L
    return mode, np.asarray(indices, dtype=np.int64)
