"""Register bounds for m-obstruction-free k-set agreement."""

import math
from dataclasses import asdict, dataclass


def _check(n: int, m: int, k: int) -> None:
    if not 1 <= m <= k < n:
        raise ValueError(f"Need 1 <= m <= k < n, got n={n} m={m} k={k}")


def group_count(m: int, k: int) -> int:
    """c = ceil((k+1)/m), the number of value groups the lower bounds play off."""
    return -(-(k + 1) // m)


def anonymous_lower(n: int, m: int, k: int) -> float:
    """Anonymous one-shot lower bound sqrt(m(n/k - 2)), 0 when the radicand is not positive."""
    radicand = m * (n / k - 2)
    return math.sqrt(radicand) if radicand > 0 else 0.0


def gluing_requirement(r: int, m: int, k: int) -> int:
    """Processes needed to glue executions over r registers: c(m + (r^2 - r)/2)."""
    return group_count(m, k) * (m + r * (r - 1) // 2)


def glue_registers(n: int, m: int, k: int) -> int:
    """Largest r whose gluing requirement fits in n processes, 0 if none does."""
    r = 0
    while gluing_requirement(r + 1, m, k) <= n:
        r += 1
    return r


@dataclass(frozen=True)
class Bounds:
    n: int
    m: int
    k: int
    repeated_lower: int
    repeated_upper: int
    one_shot_lower: int
    one_shot_upper: int
    anonymous_one_shot_lower: float
    anonymous_one_shot_upper: int
    anonymous_repeated_upper: int
    c: int
    glue_registers: int
    glue_processes: int

    @property
    def anonymous_min_registers(self) -> int:
        """Smallest register count strictly above the anonymous lower bound."""
        return math.floor(self.anonymous_one_shot_lower) + 1

    def to_dict(self) -> dict:
        data = asdict(self)
        data["anonymous_one_shot_lower"] = round(self.anonymous_one_shot_lower, 3)
        data["anonymous_min_registers"] = self.anonymous_min_registers
        return data


def bounds(n: int, m: int, k: int) -> Bounds:
    _check(n, m, k)
    upper = min(n + 2 * m - k, n)
    anonymous_upper = (m + 1) * (n - k) + m * m
    glued = glue_registers(n, m, k)
    return Bounds(
        n=n,
        m=m,
        k=k,
        repeated_lower=n + m - k,
        repeated_upper=upper,
        one_shot_lower=2,
        one_shot_upper=upper,
        anonymous_one_shot_lower=anonymous_lower(n, m, k),
        anonymous_one_shot_upper=anonymous_upper,
        anonymous_repeated_upper=anonymous_upper + 1,
        c=group_count(m, k),
        glue_registers=glued,
        glue_processes=gluing_requirement(glued, m, k),
    )


def sweep(ns) -> list[Bounds]:
    """Bounds for every valid (n, m, k) with n in ns."""
    rows = []
    for n in ns:
        for k in range(1, n):
            for m in range(1, k + 1):
                rows.append(bounds(n, m, k))
    return rows


def format_lower(value: float) -> str:
    return f"{value:.3f}"
