"""AP cluster configurations as set partitions.

A configuration is stored in restricted-growth form: AP 0 is in cluster 0
and every new cluster label is one more than the largest label seen so far.
Enumeration is lexicographic in that form, which gives every partition a
stable integer index.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

DEFAULT_ACTION_CAP = 4096


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    assignment: tuple

    def __post_init__(self):
        a = tuple(int(v) for v in self.assignment)
        object.__setattr__(self, "assignment", a)
        if not a:
            raise ClusterError("empty assignment")
        labels = set(a)
        if labels != set(range(len(labels))):
            raise ClusterError(f"cluster labels must cover 0..{len(labels) - 1}: {a}")

    @classmethod
    def from_assignment(cls, assignment):
        """Relabel an arbitrary labeling into restricted-growth form."""
        relabel = {}
        out = []
        for v in assignment:
            if v not in relabel:
                relabel[v] = len(relabel)
            out.append(relabel[v])
        return cls(tuple(out))

    @classmethod
    def singletons(cls, num_aps):
        return cls(tuple(range(num_aps)))

    @classmethod
    def from_string(cls, text):
        return cls(tuple(int(tok) for tok in text.split(",")))

    def to_string(self):
        return ",".join(str(v) for v in self.assignment)

    @property
    def num_aps(self):
        return len(self.assignment)

    @property
    def num_clusters(self):
        return max(self.assignment) + 1

    @property
    def is_canonical(self):
        return self == ClusterConfig.from_assignment(self.assignment)

    def sizes(self):
        counts = [0] * self.num_clusters
        for v in self.assignment:
            counts[v] += 1
        return tuple(counts)

    def blocks(self):
        """APs of each cluster, in cluster order."""
        out = [[] for _ in range(self.num_clusters)]
        for m, v in enumerate(self.assignment):
            out[v].append(m)
        return tuple(tuple(b) for b in out)

    def block_structure(self):
        return frozenset(frozenset(b) for b in self.blocks())


@lru_cache(maxsize=None)
def _completions(remaining, used, target):
    """Ways to label `remaining` more APs given `used` clusters opened so far,
    ending with exactly `target` clusters."""
    if used > target:
        return 0
    if remaining == 0:
        return 1 if used == target else 0
    if target - used > remaining:
        return 0
    return used * _completions(remaining - 1, used, target) + _completions(remaining - 1, used + 1, target)


def count_configs(num_aps, num_clusters):
    """Stirling number of the second kind S(M, M~)."""
    _check_dims(num_aps, num_clusters)
    return _completions(num_aps - 1, 1, num_clusters)


def _check_dims(num_aps, num_clusters):
    if num_aps < 1 or num_clusters < 1:
        raise ClusterError(f"need M >= 1 and M~ >= 1, got ({num_aps}, {num_clusters})")
    if num_clusters > num_aps:
        raise ClusterError(f"M~ = {num_clusters} exceeds M = {num_aps}")


def enumerate_configs(num_aps, num_clusters, cap=DEFAULT_ACTION_CAP, labeled=False):
    """All partitions of M APs into exactly M~ non-empty clusters.

    Unlabeled (set partitions) by default; ``labeled=True`` expands every
    partition into its M~! label permutations.
    """
    total = count_configs(num_aps, num_clusters)
    if labeled:
        total *= _factorial(num_clusters)
    if cap is not None and total > cap:
        raise ClusterError(f"{total} configurations exceed the action cap {cap}")
    out = []
    for rgs in _rgs_iter(num_aps, num_clusters):
        if labeled:
            for perm in itertools.permutations(range(num_clusters)):
                out.append(ClusterConfig(tuple(perm[v] for v in rgs)))
        else:
            out.append(ClusterConfig(rgs))
    return out


def _factorial(n):
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


def _rgs_iter(num_aps, num_clusters):
    a = [0] * num_aps

    def rec(i, used):
        if i == num_aps:
            if used == num_clusters:
                yield tuple(a)
            return
        if num_clusters - used > num_aps - i:
            return
        for v in range(min(used + 1, num_clusters)):
            a[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(1, 1)


def config_by_index(num_aps, num_clusters, n):
    """The n-th configuration of the lexicographic enumeration (0-based)."""
    total = count_configs(num_aps, num_clusters)
    if not 0 <= n < total:
        raise ClusterError(f"index {n} out of range [0, {total})")
    a = [0]
    used = 1
    for i in range(1, num_aps):
        remaining = num_aps - i - 1
        for v in range(used + 1):
            nxt = max(used, v + 1)
            cnt = _completions(remaining, nxt, num_clusters)
            if n < cnt:
                a.append(v)
                used = nxt
                break
            n -= cnt
    return ClusterConfig(tuple(a))


def index_of(config):
    """Inverse of config_by_index for a canonical configuration."""
    if not config.is_canonical:
        raise ClusterError(f"{config.to_string()} is not in restricted-growth form")
    m_tot, target = config.num_aps, config.num_clusters
    n = 0
    used = 1
    for i in range(1, m_tot):
        v = config.assignment[i]
        remaining = m_tot - i - 1
        for smaller in range(v):
            n += _completions(remaining, max(used, smaller + 1), target)
        used = max(used, v + 1)
    return n
