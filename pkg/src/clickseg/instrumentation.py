"""Lightweight call counters, used to verify which code paths a given
training configuration exercises."""

from collections import Counter

_counters: Counter = Counter()


def record(event: str) -> None:
    _counters[event] += 1


def counts() -> dict:
    return dict(_counters)


def reset() -> None:
    _counters.clear()
