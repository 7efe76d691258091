"""Policy descriptors shared by the crypto, XACML and role layers."""

from dataclasses import dataclass

from .errors import PolicyError
from .tree import OPS, build_access_tree

U64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class TriggerPolicy:
    """Access to individual values whose key satisfies ``k op theta``."""

    theta: int
    op: str
    kind = "trigger"

    def __post_init__(self):
        if self.op not in OPS:
            raise PolicyError(f"unknown comparison {self.op!r}")
        if not (0 <= self.theta <= U64_MAX):
            raise PolicyError(f"theta {self.theta} outside u64")
        if self.op == "gt" and self.theta == U64_MAX:
            raise PolicyError("k > 2**64-1 is unsatisfiable")
        if self.op == "lt" and self.theta == 0:
            raise PolicyError("k < 0 is unsatisfiable")

    def holds(self, k):
        return _compare(k, self.op, self.theta)

    def tree(self, width=64):
        return build_access_tree(self.theta, self.op, width)

    def __str__(self):
        return f"{self.op}:{self.theta}"


@dataclass(frozen=True)
class WindowPolicy:
    """Access to averages of non-overlapping size-``beta`` windows from ``alpha``."""

    alpha: int
    beta: int
    kind = "window"

    def __post_init__(self):
        if not (0 <= self.alpha <= U64_MAX):
            raise PolicyError(f"alpha {self.alpha} outside u64")
        if not (1 <= self.beta <= 0xFFFFFFFF):
            raise PolicyError(f"window size {self.beta} must be a positive u32")

    def holds(self, k):
        return k >= self.alpha

    def tree(self, width=64):
        return build_access_tree(self.alpha, "ge", width)

    def window_index(self, k):
        """Index i of the window containing key k (None before alpha)."""
        if k < self.alpha:
            return None
        return (k - self.alpha) // self.beta

    def window_start(self, i):
        return self.alpha + i * self.beta

    def __str__(self):
        return f"window:{self.alpha},{self.beta}"


def _compare(k, op, theta):
    if op == "eq":
        return k == theta
    if op == "ge":
        return k >= theta
    if op == "gt":
        return k > theta
    if op == "le":
        return k <= theta
    return k < theta


def parse_policy_spec(text):
    """Parse the CLI form: ``eq:42``, ``ge:9``, ``window:9,5``."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "window":
            a, b = rest.split(",")
            return WindowPolicy(int(a), int(b))
        if kind in OPS:
            return TriggerPolicy(int(rest), kind)
    except ValueError as exc:
        raise PolicyError(f"bad policy spec {text!r}: {exc}") from None
    raise PolicyError(f"bad policy spec {text!r}")
