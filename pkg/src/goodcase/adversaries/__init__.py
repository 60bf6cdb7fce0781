from goodcase.adversaries.base import (
    AdversaryContext,
    AdversaryStrategy,
    ShadowAdversary,
    SilentAdversary,
    SplitAdversary,
    min_awake,
)
from goodcase.adversaries.fuzz import FuzzAdversary, fuzz_adversary

STRATEGIES = {
    "silent": SilentAdversary,
    "honest": ShadowAdversary,
    "split": SplitAdversary,
    "fuzz": FuzzAdversary,
}

# scripted executions; imported last because they build on the simulator
from goodcase.adversaries.attacks import AppendixGAdversary, Exec1Adversary, Exec2Adversary  # noqa: E402

STRATEGIES.update({
    "appendix-g": AppendixGAdversary,
    "exec1": Exec1Adversary,
    "exec2": Exec2Adversary,
})

__all__ = [
    "AdversaryContext", "AdversaryStrategy", "ShadowAdversary", "SilentAdversary",
    "SplitAdversary", "FuzzAdversary", "fuzz_adversary", "min_awake", "STRATEGIES",
]
