"""Factor catalog and name parsing.

Names follow ``{family}``, ``{family}_{period}`` or ``{family}_{variant}_{period}``,
for example ``macd``, ``rsi_14`` and ``bb_upper_20``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import AlphaForgeError

TREND = ("ema", "sma", "ma", "bb", "atr", "macd", "roc", "max", "min")
OSCILLATORS = ("rsi", "mfi", "stoch", "cci", "obv")
STATISTICAL = ("std", "vstd", "beta", "corr", "cord")
POSITION = ("rank", "imax", "imin", "imxd", "rsv", "qtlu", "qtld")
CANDLESTICK = ("klen", "kup", "kup2", "klow", "klow2", "kmid", "kmid2", "ksft", "ksft2")
VOLUME = ("vma", "logvol", "wvma")
COUNTING = ("cntp", "cntn", "cntd", "sump", "sumn", "sumd", "vsump", "vsumn", "vsumd")

GROUPS = {
    "trend": TREND,
    "oscillators": OSCILLATORS,
    "statistical": STATISTICAL,
    "position": POSITION,
    "candlestick": CANDLESTICK,
    "volume": VOLUME,
    "counting": COUNTING,
}
FAMILY_GROUP = {fam: group for group, fams in GROUPS.items() for fam in fams}
FAMILIES = tuple(FAMILY_GROUP)

VARIANTS = {
    "bb": ("upper", "middle", "lower"),
    "stoch": ("k", "d"),
    "macd": ("line", "signal", "hist"),
}
NO_PERIOD = frozenset(("macd", "obv", "logvol") + CANDLESTICK)
MIN_PERIOD_2 = frozenset(("std", "vstd", "corr", "cord", "wvma"))
# families that consume one-bar differences or shifts: warm-up is w, not w - 1
DIFFERENCED = frozenset(("roc", "beta", "rsi", "mfi", "cord", "wvma") + COUNTING)

MACD_FAST, MACD_SLOW, MACD_SIGNAL = 12, 26, 9
STOCH_D_PERIOD = 3

_PERIOD_RE = re.compile(r"^[+-]?\d+$")


class FactorNameError(AlphaForgeError, ValueError):
    pass


class UnknownFamily(FactorNameError):
    pass


class MissingPeriod(FactorNameError):
    pass


class ForbiddenPeriod(FactorNameError):
    pass


class NonPositivePeriod(FactorNameError):
    pass


class PeriodTooSmall(FactorNameError):
    pass


class MalformedFactorName(FactorNameError):
    pass


@dataclass(frozen=True)
class FactorSpec:
    family: str
    variant: str | None = None
    period: int | None = None

    @property
    def name(self) -> str:
        parts = [self.family]
        if self.variant is not None and not (self.family == "macd" and self.variant == "line"):
            parts.append(self.variant)
        if self.period is not None:
            parts.append(str(self.period))
        return "_".join(parts)

    @property
    def group(self) -> str:
        return FAMILY_GROUP[self.family]

    @property
    def warmup(self) -> int:
        """Leading not-a-value entries on clean (non-degenerate) input."""
        fam, w = self.family, self.period
        if fam == "macd":
            slow = MACD_SLOW - 1
            return slow if self.variant == "line" else slow + MACD_SIGNAL - 1
        if w is None:
            return 0
        if fam == "stoch" and self.variant == "d":
            return w - 1 + STOCH_D_PERIOD - 1
        if fam in DIFFERENCED:
            return w
        return w - 1

    def __str__(self) -> str:
        return self.name


def _parse_period(token: str, name: str) -> int:
    if not _PERIOD_RE.match(token):
        raise MalformedFactorName(f"{name!r}: malformed period {token!r}")
    period = int(token)
    if period < 1:
        raise NonPositivePeriod(f"{name!r}: period must be positive")
    if str(period) != token:
        raise MalformedFactorName(f"{name!r}: non-canonical period {token!r}")
    return period


def parse_factor_name(name: str) -> FactorSpec:
    """Parse a catalog factor name into its canonical spec."""
    if not isinstance(name, str) or not name:
        raise MalformedFactorName(f"invalid factor name {name!r}")
    tokens = name.split("_")
    family, rest = tokens[0], tokens[1:]
    if family not in FAMILY_GROUP:
        raise UnknownFamily(f"unknown factor family in {name!r}")

    variant = None
    if family in VARIANTS:
        choices = VARIANTS[family]
        if family == "macd":
            variant = "line"
            if rest and rest[0] in choices[1:]:
                variant, rest = rest[0], rest[1:]
        else:
            if not rest or rest[0] not in choices:
                raise UnknownFamily(
                    f"{name!r}: {family} needs a variant from {', '.join(choices)}"
                )
            variant, rest = rest[0], rest[1:]

    if family in NO_PERIOD:
        if rest:
            if len(rest) == 1 and _PERIOD_RE.match(rest[0]):
                raise ForbiddenPeriod(f"{name!r}: {family} takes no period")
            raise UnknownFamily(f"unknown factor name {name!r}")
        return FactorSpec(family, variant, None)

    if not rest:
        raise MissingPeriod(f"{name!r}: {family} requires a period")
    if len(rest) > 1:
        raise UnknownFamily(f"unknown factor name {name!r}")
    period = _parse_period(rest[0], name)
    if family in MIN_PERIOD_2 and period < 2:
        raise PeriodTooSmall(f"{name!r}: {family} requires period >= 2")
    return FactorSpec(family, variant, period)
