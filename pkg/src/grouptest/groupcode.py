"""Group coding: a non-adaptive design where every subject joins ``k`` groups.

No two subjects share the same set of groups (their *signature*), so after
one parallel round of group tests a subject is called positive iff all of
its groups came back positive. An optional second pass retests those
candidates individually.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .testbed import PERFECT, PopulationState, TestLedger, TestModel, pooled_tests_flat
from .theory import round_half_up, theory_params


class DesignInfeasible(ValueError):
    pass


class DesignFormatError(ValueError):
    pass


class GroupMismatch(ValueError):
    pass


def n_groups_for(n: int, m: int, k: int) -> int:
    # at least k groups so a single subject still gets k distinct ones
    return max(k, round_half_up(n * k / m))


@dataclass(frozen=True)
class PoolingDesign:
    n: int
    n_groups: int
    k: int
    signatures: np.ndarray = field(repr=False)
    m: int = 0
    f: float = float("nan")
    seed: int = 0

    def __post_init__(self):
        sigs = self.signatures
        if sigs.shape != (self.n, self.k):
            raise ValueError(f"signatures have shape {sigs.shape}, expected {(self.n, self.k)}")

    @property
    def _csr(self):
        cached = self.__dict__.get("_csr_cache")
        if cached is None:
            flat = self.signatures.ravel()
            order = np.argsort(flat, kind="stable")
            members = (order // self.k).astype(np.int64)
            sizes = np.bincount(flat, minlength=self.n_groups)
            starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
            cached = (members, starts, sizes)
            object.__setattr__(self, "_csr_cache", cached)
        return cached

    @property
    def group_sizes(self) -> np.ndarray:
        return self._csr[2]

    @property
    def groups(self) -> list:
        members, starts, sizes = self._csr
        return [members[s:s + z] for s, z in zip(starts, sizes)]


def build_design(n: int, f: float, seed: int, *, m: int | None = None, k: int | None = None) -> PoolingDesign:
    """Design for ``n`` subjects using the optimal ``m`` and ``k`` for ``f`` unless overridden."""
    params = theory_params(f)
    m = params.m if m is None else m
    k = params.k if k is None else k
    return build_balanced_design(n, m, k, seed, f=params.f)


def build_balanced_design(n: int, m: int, k: int, seed: int, f: float = float("nan")) -> PoolingDesign:
    """Greedy least-loaded assignment with unique signatures.

    Groups are handed out from a stream of shuffled permutations of all
    group ids, so each subject takes the ``k`` least-loaded groups with
    random tie-breaking. A repeated group within one signature is deferred
    to the next subject. On a signature collision the last pick is swapped
    for the next candidate in the stream.
    """
    if n < 1 or m < 1 or k < 1:
        raise ValueError(f"need n, m, k >= 1 (got n={n}, m={m}, k={k})")
    n_groups = n_groups_for(n, m, k)
    if math.comb(n_groups, k) < n:
        raise DesignInfeasible(
            f"C(n_groups={n_groups}, k={k}) = {math.comb(n_groups, k)} < n={n}: "
            "not enough distinct signatures"
        )
    rng = np.random.default_rng([seed, 2])
    queue: deque = deque()
    seen: set = set()
    sigs = np.empty((n, k), dtype=np.int64)
    probe_limit = 4 * n_groups + 4 * k

    def take() -> int:
        if not queue:
            queue.extend(rng.permutation(n_groups).tolist())
        return queue.popleft()

    for s in range(n):
        chosen: list = []
        deferred: list = []
        while len(chosen) < k:
            g = take()
            (deferred if g in chosen else chosen).append(g)
        sig = tuple(sorted(chosen))
        probes = 0
        while sig in seen:
            probes += 1
            if probes > probe_limit:
                raise DesignInfeasible(f"could not find a unique signature for subject {s}")
            g = take()
            if g in chosen:
                deferred.append(g)
                continue
            deferred.append(chosen[-1])
            chosen[-1] = g
            sig = tuple(sorted(chosen))
        queue.extendleft(reversed(deferred))
        seen.add(sig)
        sigs[s] = sig
    return PoolingDesign(n=n, n_groups=n_groups, k=k, signatures=sigs, m=m, f=f, seed=seed)


def check_design(design: PoolingDesign) -> None:
    """Raise ``ValueError`` unless the design is k-regular with distinct signatures."""
    sigs = design.signatures
    if sigs.size and (sigs.min() < 0 or sigs.max() >= design.n_groups):
        raise ValueError("group index out of range")
    rows = np.sort(sigs, axis=1)
    if np.any(np.diff(rows, axis=1) == 0):
        raise ValueError("a subject appears twice in one group")
    if len({tuple(r) for r in rows.tolist()}) != design.n:
        raise ValueError("signatures are not unique")


@dataclass
class DecodeResult:
    first_pass_positives: np.ndarray
    ledger: TestLedger
    confirmed_positives: np.ndarray | None = None
    false_positive_count: int | None = None

    @property
    def reported(self) -> np.ndarray:
        return self.first_pass_positives if self.confirmed_positives is None else self.confirmed_positives


def first_pass(
    pop: PopulationState,
    design: PoolingDesign,
    model: TestModel = PERFECT,
    rng: np.random.Generator | None = None,
    ledger: TestLedger | None = None,
) -> tuple:
    """Test every group once; returns ``(results, ledger)``."""
    if design.n != pop.n:
        raise ValueError(f"design is for {design.n} subjects, population has {pop.n}")
    rng = np.random.default_rng([pop.seed, 1]) if rng is None else rng
    ledger = TestLedger() if ledger is None else ledger
    members, starts, _ = design._csr
    results = pooled_tests_flat(pop, members, starts, model, ledger, rng, stage="first-pass")
    return results, ledger


def decode(design: PoolingDesign, results) -> np.ndarray:
    """Subjects whose groups all tested positive, ascending."""
    results = np.asarray(results, dtype=bool)
    if results.shape != (design.n_groups,):
        raise ValueError(f"expected {design.n_groups} group results, got {results.shape}")
    return np.flatnonzero(results[design.signatures].all(axis=1))


def retest_pass(
    pop: PopulationState,
    candidates,
    model: TestModel,
    rng: np.random.Generator,
    ledger: TestLedger,
) -> np.ndarray:
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return candidates
    outcome = pooled_tests_flat(pop, candidates, np.arange(candidates.size), model, ledger, rng, stage="retest")
    return candidates[outcome]


def run_group_coding(
    pop: PopulationState,
    design: PoolingDesign,
    model: TestModel = PERFECT,
    rng: np.random.Generator | None = None,
    with_retest: bool = True,
) -> DecodeResult:
    rng = np.random.default_rng([pop.seed, 1]) if rng is None else rng
    results, ledger = first_pass(pop, design, model, rng)
    positives = decode(design, results)
    out = DecodeResult(first_pass_positives=positives, ledger=ledger)
    out.false_positive_count = int(np.count_nonzero(~pop.infected[positives]))
    if with_retest:
        out.confirmed_positives = retest_pass(pop, positives, model, rng, ledger)
    return out


def decode_bruteforce_oracle(design: PoolingDesign, infected) -> set:
    """Perfect-test decode straight from the definition, for small designs.

    Works from the group lists alone: a group is positive iff it holds an
    infected subject, and a subject is positive iff every group listing it
    is positive.
    """
    infected = set(int(i) for i in infected)
    groups = [members.tolist() for members in design.groups]
    positive_groups = {gid for gid, members in enumerate(groups) if any(s in infected for s in members)}
    membership: dict = {}
    for gid, members in enumerate(groups):
        for s in members:
            membership.setdefault(s, []).append(gid)
    found = set()
    for subject in range(design.n):
        mine = membership.get(subject, [])
        if mine and all(g in positive_groups for g in mine):
            found.add(subject)
    return found


# --- file formats -----------------------------------------------------------

_HEADER_KEYS = ("n", "n_groups", "k", "m", "f", "seed")


def format_design(design: PoolingDesign) -> str:
    lines = [
        f"n={design.n}",
        f"n_groups={design.n_groups}",
        f"k={design.k}",
        f"m={design.m}",
        f"f={design.f!r}",
        f"seed={design.seed}",
    ]
    for gid, members in enumerate(design.groups):
        lines.append(f"{gid}: " + ", ".join(str(int(s)) for s in members))
    return "\n".join(lines) + "\n"


def parse_design(text: str) -> PoolingDesign:
    header: dict = {}
    groups: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if ":" in line:
                gid_s, body = line.split(":", 1)
                gid = int(gid_s)
                if gid in groups:
                    raise DesignFormatError(f"line {lineno}: group {gid} listed twice")
                groups[gid] = [int(x) for x in body.split(",")] if body.strip() else []
            else:
                key, val = line.split("=", 1)
                header[key.strip()] = val.strip()
        except ValueError as exc:
            if isinstance(exc, DesignFormatError):
                raise
            raise DesignFormatError(f"line {lineno}: cannot parse {raw!r}") from None
    missing = [key for key in ("n", "n_groups", "k") if key not in header]
    if missing:
        raise DesignFormatError(f"design header lacks {', '.join(missing)}")
    try:
        n, n_groups, k = int(header["n"]), int(header["n_groups"]), int(header["k"])
        m = int(header.get("m", 0))
        f = float(header.get("f", "nan"))
        seed = int(header.get("seed", 0))
    except ValueError:
        raise DesignFormatError("non-numeric design header value") from None
    if sorted(groups) != list(range(n_groups)):
        raise DesignFormatError(f"design lists groups {len(groups)} ids, expected 0..{n_groups - 1}")
    per_subject: list = [[] for _ in range(n)]
    for gid in range(n_groups):
        for s in groups[gid]:
            if not 0 <= s < n:
                raise DesignFormatError(f"group {gid}: subject {s} out of range")
            per_subject[s].append(gid)
    bad = [s for s, g in enumerate(per_subject) if len(g) != k]
    if bad:
        raise DesignFormatError(f"subject {bad[0]} is in {len(per_subject[bad[0]])} groups, expected {k}")
    sigs = np.array([sorted(g) for g in per_subject], dtype=np.int64).reshape(n, k)
    design = PoolingDesign(n=n, n_groups=n_groups, k=k, signatures=sigs, m=m, f=f, seed=seed)
    try:
        check_design(design)
    except ValueError as exc:
        raise DesignFormatError(str(exc)) from None
    return design


def format_results(results) -> str:
    return "".join(f"{gid},{int(bool(r))}\n" for gid, r in enumerate(results))


def parse_results(text: str, n_groups: int) -> np.ndarray:
    """Parse ``group_id,0|1`` lines and check they cover exactly the design's groups."""
    seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise DesignFormatError(f"results line {lineno}: expected 'group_id,0|1', got {raw!r}")
        try:
            gid = int(parts[0])
        except ValueError:
            raise DesignFormatError(f"results line {lineno}: bad group id {parts[0]!r}") from None
        if gid in seen:
            raise DesignFormatError(f"results line {lineno}: group {gid} reported twice")
        seen[gid] = parts[1] == "1"
    missing = sorted(set(range(n_groups)) - set(seen))
    extra = sorted(set(seen) - set(range(n_groups)))
    if missing or extra:
        msg = []
        if missing:
            msg.append("missing group id(s) " + ", ".join(map(str, missing[:20])))
        if extra:
            msg.append("unknown group id(s) " + ", ".join(map(str, extra[:20])))
        raise GroupMismatch("; ".join(msg))
    return np.array([seen[g] for g in range(n_groups)], dtype=bool)


def parse_retest(text: str) -> dict:
    """``subject_id,0|1`` lines from an individual retest."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise DesignFormatError(f"retest line {lineno}: expected 'subject_id,0|1', got {raw!r}")
        try:
            out[int(parts[0])] = parts[1] == "1"
        except ValueError:
            raise DesignFormatError(f"retest line {lineno}: bad subject id {parts[0]!r}") from None
    return out


def format_decode_output(first_pass_positives, confirmed=None) -> str:
    confirmed = set() if confirmed is None else {int(s) for s in confirmed}
    return "".join(
        f"{int(s)},{'confirmed' if int(s) in confirmed else 'firstpass'}\n" for s in first_pass_positives
    )
