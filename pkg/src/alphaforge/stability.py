"""Decision-instability analytics over repeated runs of the same task.

Actions are integers: 1 buy, 0 hold, -1 sell.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .errors import AlphaForgeError

ACTIONS = (1, 0, -1)
ACTION_NAMES = {1: "buy", 0: "hold", -1: "sell"}


class StabilityError(AlphaForgeError, ValueError):
    pass


class LengthMismatch(StabilityError):
    pass


class EmptySequence(StabilityError):
    pass


@dataclass
class RunBundle:
    """Equal-length action sequences, each tagged with a run index and temperature."""

    sequences: list[list[int]]
    runs: list[int] = field(default_factory=list)
    temperatures: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.sequences = [list(s) for s in self.sequences]
        n = len(self.sequences)
        self.runs = list(self.runs) or list(range(n))
        self.temperatures = list(self.temperatures) or [""] * n
        if len(self.runs) != n or len(self.temperatures) != n:
            raise StabilityError("every sequence needs a run index and temperature tag")
        _same_length(self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def by_temperature(self) -> dict[str, "RunBundle"]:
        out: dict[str, list[int]] = {}
        for i, temp in enumerate(self.temperatures):
            out.setdefault(temp, []).append(i)
        return {
            t: RunBundle([self.sequences[i] for i in idx], [self.runs[i] for i in idx], [t] * len(idx))
            for t, idx in out.items()
        }


def _same_length(seqs: Sequence[Sequence[int]]) -> int:
    lengths = {len(s) for s in seqs}
    if len(lengths) > 1:
        raise LengthMismatch(f"sequence lengths differ: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def pairwise_agreement(a: Sequence[int], b: Sequence[int]) -> float:
    if len(a) != len(b):
        raise LengthMismatch(f"lengths {len(a)} and {len(b)} differ")
    if not a:
        raise EmptySequence("cannot compare empty sequences")
    return sum(1 for x, y in zip(a, b) if x == y) / len(a)


def pairwise_matrix(seqs: Sequence[Sequence[int]]) -> list[list[float]]:
    n = len(seqs)
    m = [[1.0] * n for _ in range(n)]
    for i, j in combinations(range(n), 2):
        m[i][j] = m[j][i] = pairwise_agreement(seqs[i], seqs[j])
    return m


def modal_action(actions: Sequence[int]) -> int:
    """Most frequent action; any tie for the top count resolves to hold."""
    counts = Counter(actions)
    top = max(counts.values())
    winners = [a for a in ACTIONS if counts.get(a) == top]
    return winners[0] if len(winners) == 1 else 0


@dataclass
class StepwiseAgreement:
    series: list[float]
    mean: float
    disagreement_rate: float


def stepwise_agreement(seqs: Sequence[Sequence[int]], mode: str = "modal") -> StepwiseAgreement:
    """Per-step agreement across runs.

    ``modal``: share of runs choosing the step's most common action.
    ``jaccard``: |intersection| / |union| of the runs' singleton action sets,
    which is 1 when unanimous and 0 otherwise.
    """
    if isinstance(seqs, RunBundle):
        seqs = seqs.sequences
    if len(seqs) < 2:
        raise StabilityError("stepwise agreement needs at least two runs")
    n_steps = _same_length(seqs)
    if n_steps == 0:
        raise EmptySequence("sequences are empty")
    if mode not in ("modal", "jaccard"):
        raise StabilityError(f"unknown mode {mode!r}")
    series = []
    for t in range(n_steps):
        column = [s[t] for s in seqs]
        if mode == "modal":
            series.append(max(Counter(column).values()) / len(column))
        else:
            series.append(1.0 if len(set(column)) == 1 else 0.0)
    return StepwiseAgreement(
        series=series,
        mean=sum(series) / n_steps,
        disagreement_rate=sum(1 for v in series if v < 1.0) / n_steps,
    )


def action_distribution(seq: Sequence[int]) -> dict[str, float]:
    if not seq:
        raise EmptySequence("action distribution of an empty sequence")
    counts = Counter(seq)
    unknown = set(counts) - set(ACTIONS)
    if unknown:
        raise StabilityError(f"unknown actions {sorted(unknown)}")
    return {ACTION_NAMES[a]: counts.get(a, 0) / len(seq) for a in ACTIONS}


def modal_sequence(seqs: Sequence[Sequence[int]]) -> list[int]:
    n_steps = _same_length(seqs)
    return [modal_action([s[t] for s in seqs]) for t in range(n_steps)]


def temperature_agreement(a: RunBundle | Sequence[Sequence[int]],
                          b: RunBundle | Sequence[Sequence[int]]) -> float:
    """Agreement between the per-step modal decisions of two temperatures."""
    seqs_a = a.sequences if isinstance(a, RunBundle) else list(a)
    seqs_b = b.sequences if isinstance(b, RunBundle) else list(b)
    if not seqs_a or not seqs_b:
        raise StabilityError("each bundle needs at least one run")
    return pairwise_agreement(modal_sequence(seqs_a), modal_sequence(seqs_b))


def flip_rate(seq: Sequence[int], horizon: int = 1) -> float:
    """Share of consecutive non-hold action pairs that reverse within ``horizon`` steps.

    Holds between the two actions are skipped over; the pair counts as a flip
    when the actions are opposite and at most ``horizon`` steps apart.
    """
    if horizon < 1:
        raise StabilityError("horizon must be >= 1")
    active = [(t, a) for t, a in enumerate(seq) if a != 0]
    pairs = list(zip(active, active[1:]))
    if not pairs:
        return 0.0
    flips = sum(1 for (t0, a0), (t1, a1) in pairs if a1 == -a0 and t1 - t0 <= horizon)
    return flips / len(pairs)


@dataclass
class AgreementReport:
    labels: list[str]
    pairwise: list[list[float]]
    stepwise: StepwiseAgreement | None  # None for a single run
    distributions: list[dict[str, float]]
    flip_rates: list[float]
    temperatures: list[str]
    temperature_matrix: list[list[float]]
    mode: str = "modal"
    horizon: int = 1

    def to_json(self) -> dict:
        return {
            "labels": self.labels,
            "mode": self.mode,
            "horizon": self.horizon,
            "pairwise": self.pairwise,
            "stepwise": self.stepwise.series if self.stepwise else None,
            "mean_agreement": self.stepwise.mean if self.stepwise else None,
            "disagreement_rate": self.stepwise.disagreement_rate if self.stepwise else None,
            "distributions": self.distributions,
            "flip_rates": self.flip_rates,
            "temperatures": self.temperatures,
            "temperature_agreement": self.temperature_matrix,
        }


def analyze(bundle: RunBundle, labels: Sequence[str] | None = None, mode: str = "modal",
            horizon: int = 1) -> AgreementReport:
    labels = list(labels) if labels else [f"run{r}" for r in bundle.runs]
    per_temp = bundle.by_temperature()
    temps = sorted(per_temp)
    tmat = [[1.0] * len(temps) for _ in temps]
    for i, j in combinations(range(len(temps)), 2):
        tmat[i][j] = tmat[j][i] = temperature_agreement(per_temp[temps[i]], per_temp[temps[j]])
    return AgreementReport(
        labels=labels,
        pairwise=pairwise_matrix(bundle.sequences),
        stepwise=stepwise_agreement(bundle.sequences, mode) if len(bundle) > 1 else None,
        distributions=[action_distribution(s) for s in bundle.sequences],
        flip_rates=[flip_rate(s, horizon) for s in bundle.sequences],
        temperatures=temps,
        temperature_matrix=tmat,
        mode=mode,
        horizon=horizon,
    )
