"""Ideal stand-in for the black-box half-secure agreement protocol used as fallback.

Correct parties awake in the start round submit an input; from round
``start_round + duration`` on, every correct party that polls gets the same
output.  The output is the majority of the submissions (smallest value on a
tie), which makes validity and agreement hold by construction.
"""

from __future__ import annotations

from collections import Counter
from typing import Optional, Sequence

from goodcase.core import PartyId


class LateSubmission(Exception):
    """A submission outside the start round, which only an engine bug can cause."""


class IdealFallback:
    def __init__(self, start_round: int, duration: int = 2, universe: Sequence[int] = (0, 1)) -> None:
        if duration < 1:
            raise ValueError("duration must be positive")
        self.start_round = start_round
        self.duration = duration
        self.universe = tuple(universe)
        self.submitted: dict[PartyId, int] = {}
        self.output: Optional[int] = None
        self.polled: dict[PartyId, int] = {}

    @property
    def ready_round(self) -> int:
        return self.start_round + self.duration

    def submit(self, p: PartyId, u: int, t: int) -> None:
        if t != self.start_round:
            raise LateSubmission(f"p{p} submitted in round {t}, fallback starts in {self.start_round}")
        if self.output is not None:
            raise LateSubmission("submission after the output was fixed")
        self.submitted.setdefault(p, u)

    def _compute(self) -> int:
        if not self.submitted:
            return self.universe[0]
        counts = Counter(self.submitted.values())
        return min(counts, key=lambda u: (-counts[u], u))

    def poll(self, p: PartyId, t: int) -> Optional[int]:
        if t < self.ready_round:
            return None
        if self.output is None:
            self.output = self._compute()
        self.polled.setdefault(p, t)
        return self.output


def check_fallback_contract(fb: IdealFallback, correct: set[PartyId], awake_by_round: Sequence[set]) -> list[str]:
    """Agreement, validity and termination of the fallback's outputs for one run.

    Returns a list of human-readable failures (empty when the contract holds).
    """
    problems = []
    if fb.submitted:
        values = set(fb.submitted.values())
        if len(values) == 1 and fb.output is not None and fb.output not in values:
            problems.append(f"validity: all submitted {values.pop()} but output {fb.output}")
    stray = set(fb.submitted) - correct
    if stray:
        problems.append(f"submissions from non-correct parties {sorted(stray)}")
    late = [t for t in range(len(awake_by_round)) if t >= fb.ready_round]
    for p in sorted(correct):
        first = next((t for t in late if p in awake_by_round[t]), None)
        if first is not None and fb.polled.get(p) != first:
            problems.append(f"termination: p{p} awake in round {first} but polled at {fb.polled.get(p)}")
    return problems
