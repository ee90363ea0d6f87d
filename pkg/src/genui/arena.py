"""Pairwise preference evaluation: verdict ingestion, win matrices, anchored
pairwise-strength ratings, and output-error statistics.

Ratings are the maximum-likelihood solution of a pairwise-strength model
(ties counted as half a win to each side, plus one virtual tie per observed
pair so sweep outcomes stay finite), solved with a minorize-maximize
iteration and mapped to the familiar rating scale: mean anchored at 1500,
400-point logistic slope. This is deterministic and independent of record
order, unlike sequential rating updates.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

ANCHOR_MEAN = 1500.0
SCALE = 400.0
VERDICTS = ("left", "neutral", "right")

MM_EPS = 1e-10
MM_MAX_ITER = 10000


class MalformedRecord(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConflictingDuplicate(ValueError):
    pass


class DisconnectedGraph(ValueError):
    def __init__(self, components: list[set[str]]):
        super().__init__(f"comparison graph is disconnected: {components}")
        self.components = components


class UnlabeledArtifact(KeyError):
    pass


class NoArtifacts(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    id: str
    label: str = ""


@dataclass(frozen=True)
class ComparisonRecord:
    study: str
    prompt_id: str
    left: str
    right: str
    rater: str
    verdict: str  # left | neutral | right

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise ValueError("left and right arms must differ")
        if self.verdict not in VERDICTS:
            raise ValueError(f"invalid verdict {self.verdict!r}")


@dataclass
class Dataset:
    study: str
    records: list[ComparisonRecord] = field(default_factory=list)

    @property
    def arms(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.left)
            seen.setdefault(r.right)
        return tuple(seen)

    def pair_counts(self) -> dict[tuple[str, str], dict[str, float]]:
        """Per unordered pair {wins_a, wins_b, ties} with (a, b) sorted."""
        out: dict[tuple[str, str], dict[str, float]] = {}
        for r in self.records:
            a, b = sorted((r.left, r.right))
            cell = out.setdefault((a, b), {"wins_a": 0.0, "wins_b": 0.0,
                                           "ties": 0.0})
            if r.verdict == "neutral":
                cell["ties"] += 1
            elif (r.verdict == "left") == (r.left == a):
                cell["wins_a"] += 1
            else:
                cell["wins_b"] += 1
        return out


@dataclass
class WinMatrix:
    arms: list[str]
    wins: dict[str, dict[str, float]]    # wins[a][b]: fraction favoring a
    counts: dict[str, dict[str, int]]    # symmetric comparison counts

    def to_dict(self) -> dict:
        return {"arms": self.arms, "wins": self.wins, "counts": self.counts}


@dataclass
class EloTable:
    ratings: dict[str, float]
    anchor_mean: float = ANCHOR_MEAN
    scale: float = SCALE

    def ordering(self) -> list[str]:
        return sorted(self.ratings, key=self.ratings.get, reverse=True)

    def to_dict(self) -> dict:
        return {"ratings": self.ratings, "anchor_mean": self.anchor_mean,
                "scale": self.scale}


@dataclass
class ErrorStats:
    per_arm: dict[str, dict[str, float]]  # arm -> {n_runs, n_output_errors, rate}

    def to_dict(self) -> dict:
        return {"per_arm": self.per_arm}


# --- ingestion ---------------------------------------------------------------

REQUIRED_FIELDS = ("study", "prompt_id", "left", "right", "rater", "verdict")


def ingest(path: Path | str) -> dict[str, Dataset]:
    """Parse a JSON-lines records file into per-study datasets.

    Duplicate (prompt, pair, rater) rows are conflicts regardless of verdict:
    each rater judges a given pairing at most once.
    """
    datasets: dict[str, Dataset] = {}
    seen: set[tuple[str, str, str, str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
            missing = [f for f in REQUIRED_FIELDS if f not in raw]
            if missing:
                raise MalformedRecord(lineno, f"missing fields {missing}")
            try:
                record = ComparisonRecord(**{f: str(raw[f]) for f in REQUIRED_FIELDS})
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
            a, b = sorted((record.left, record.right))
            dupe_key = (record.study, record.prompt_id, a, b, record.rater)
            if dupe_key in seen:
                raise ConflictingDuplicate(
                    f"line {lineno}: rater {record.rater!r} already rated "
                    f"({record.prompt_id}, {a} vs {b})")
            seen.add(dupe_key)
            datasets.setdefault(record.study, Dataset(record.study)) \
                .records.append(record)
    return datasets


# --- win matrix --------------------------------------------------------------

def win_matrix(dataset: Dataset) -> WinMatrix:
    arms = list(dataset.arms)
    wins: dict[str, dict[str, float]] = {a: {} for a in arms}
    counts: dict[str, dict[str, int]] = {a: {} for a in arms}
    for (a, b), cell in dataset.pair_counts().items():
        total = cell["wins_a"] + cell["wins_b"] + cell["ties"]
        counts[a][b] = counts[b][a] = int(total)
        if total:
            wins[a][b] = cell["wins_a"] / total
            wins[b][a] = cell["wins_b"] / total
    return WinMatrix(arms, wins, counts)


# --- ratings -----------------------------------------------------------------

def _effective_wins(dataset: Dataset,
                    virtual_ties: float = 1.0) -> dict[tuple[str, str], float]:
    """Directed half-win counts including the per-pair regularizing tie."""
    eff: dict[tuple[str, str], float] = {}
    for (a, b), cell in dataset.pair_counts().items():
        half = (cell["ties"] + virtual_ties) / 2.0
        eff[(a, b)] = cell["wins_a"] + half
        eff[(b, a)] = cell["wins_b"] + half
    return eff


def _components(arms: Sequence[str],
                pairs: Iterable[tuple[str, str]]) -> list[set[str]]:
    parent = {a: a for a in arms}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        parent[find(a)] = find(b)
    groups: dict[str, set[str]] = {}
    for a in arms:
        groups.setdefault(find(a), set()).add(a)
    return list(groups.values())


def solve_elo(dataset: Dataset,
              arms: Optional[Sequence[str]] = None) -> EloTable:
    arm_list = list(arms) if arms is not None else list(dataset.arms)
    if not arm_list:
        return EloTable({})
    pairs = list(dataset.pair_counts())
    if not pairs:
        # nothing observed: complete symmetry, everyone sits at the anchor
        return EloTable({a: ANCHOR_MEAN for a in arm_list})
    comps = _components(arm_list, pairs)
    if len(comps) > 1:
        raise DisconnectedGraph(comps)

    eff = _effective_wins(dataset)
    strengths = _mm_solve(arm_list, eff)
    log_ratings = {a: SCALE * math.log10(strengths[a]) for a in arm_list}
    mean = sum(log_ratings.values()) / len(arm_list)
    ratings = {a: ANCHOR_MEAN + log_ratings[a] - mean for a in arm_list}
    return EloTable(ratings)


def _mm_solve(arms: Sequence[str],
              eff: dict[tuple[str, str], float]) -> dict[str, float]:
    """Minorize-maximize iteration for pairwise strengths (Hunter 2004)."""
    p = {a: 1.0 for a in arms}
    total_wins = {a: 0.0 for a in arms}
    opponents: dict[str, list[str]] = {a: [] for a in arms}
    totals: dict[tuple[str, str], float] = {}
    for (a, b), w in eff.items():
        total_wins[a] += w
        if b not in opponents[a]:
            opponents[a].append(b)
        totals[(a, b)] = w + eff.get((b, a), 0.0)

    for _ in range(MM_MAX_ITER):
        new_p = {}
        for a in arms:
            denom = 0.0
            for b in opponents[a]:
                denom += totals[(a, b)] / (p[a] + p[b])
            new_p[a] = total_wins[a] / denom if denom else p[a]
        norm = sum(new_p.values())
        new_p = {a: v * len(arms) / norm for a, v in new_p.items()}
        delta = max(abs(new_p[a] - p[a]) for a in arms)
        p = new_p
        if delta < MM_EPS:
            break
    return p


# --- error statistics --------------------------------------------------------

def error_stats(artifact_errors: Iterable[tuple[str, bool]]) -> ErrorStats:
    """Aggregate (arm label, is_output_error) pairs into per-arm rates."""
    per_arm: dict[str, dict[str, float]] = {}
    n = 0
    for arm, is_error in artifact_errors:
        if arm is None or arm == "":
            raise UnlabeledArtifact("artifact without an arm label")
        n += 1
        cell = per_arm.setdefault(arm, {"n_runs": 0, "n_output_errors": 0,
                                        "rate": 0.0})
        cell["n_runs"] += 1
        if is_error:
            cell["n_output_errors"] += 1
    if n == 0:
        raise NoArtifacts("cannot compute an error rate over zero runs")
    for cell in per_arm.values():
        cell["rate"] = cell["n_output_errors"] / cell["n_runs"]
    return ErrorStats(per_arm)


# --- synthetic data ----------------------------------------------------------

def synthesize(study: str,
               pair_fractions: dict[tuple[str, str], tuple[float, float]],
               n_per_pair: int,
               seed: Optional[int] = None) -> list[ComparisonRecord]:
    """Generate verdicts matching target (win_a, win_b) fractions per pair.

    Deterministic rounding by default; pass a seed for sampled draws (used by
    the generate-then-recover round-trip tests).
    """
    rng = random.Random(seed) if seed is not None else None
    records: list[ComparisonRecord] = []
    for (a, b), (frac_a, frac_b) in pair_fractions.items():
        if frac_a + frac_b > 1.0 + 1e-9:
            raise ValueError(f"fractions for ({a}, {b}) exceed 1")
        if rng is None:
            wins_a = round(frac_a * n_per_pair)
            wins_b = round(frac_b * n_per_pair)
            verdicts = (["left"] * wins_a + ["right"] * wins_b
                        + ["neutral"] * (n_per_pair - wins_a - wins_b))
        else:
            verdicts = rng.choices(
                ["left", "right", "neutral"],
                weights=[frac_a, frac_b, max(0.0, 1.0 - frac_a - frac_b)],
                k=n_per_pair)
        for i, verdict in enumerate(verdicts):
            records.append(ComparisonRecord(
                study=study, prompt_id=f"p{i:05d}", left=a, right=b,
                rater=f"synth-{a}-{b}-{i}", verdict=verdict))
    return records


def write_records(records: Iterable[ComparisonRecord],
                  path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(vars(r)) + "\n")


# --- reporting ---------------------------------------------------------------

def _render_table(title: str, headers: list[str],
                  rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [title, "-" * len(title)]
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def report(datasets: dict[str, Dataset], out_dir: Path | str,
           errors: Optional[dict[str, ErrorStats]] = None) -> dict:
    """Write machine-readable and plain-text renderings per study."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    errors = errors or {}

    elo_bundle: dict[str, dict] = {}
    wins_bundle: dict[str, dict] = {}
    errors_bundle: dict[str, dict] = {}
    text_parts: list[str] = []

    if not datasets:
        text_parts.append("no data: no studies ingested")

    for study, dataset in sorted(datasets.items()):
        if not dataset.records:
            elo_bundle[study] = {"no_data": True}
            wins_bundle[study] = {"no_data": True}
            text_parts.append(f"study {study}: no data")
            continue
        table = solve_elo(dataset)
        matrix = win_matrix(dataset)
        elo_bundle[study] = table.to_dict()
        wins_bundle[study] = matrix.to_dict()

        rows = [[arm, f"{table.ratings[arm]:.1f}"]
                for arm in table.ordering()]
        text_parts.append(_render_table(
            f"Ratings ({study})", ["Arm", "Rating"], rows))

        arms = matrix.arms
        win_rows = []
        for a in arms:
            row = [a]
            for b in arms:
                if a == b:
                    row.append("-")
                elif b in matrix.wins.get(a, {}):
                    row.append(f"{matrix.wins[a][b] * 100:.1f}%")
                else:
                    row.append("absent")
            win_rows.append(row)
        text_parts.append(_render_table(
            f"Pairwise wins ({study})", ["Arm", *arms], win_rows))

        stats = errors.get(study)
        if stats is not None:
            err_rows = [[arm, str(int(c["n_runs"])),
                         str(int(c["n_output_errors"])), f"{c['rate'] * 100:.1f}%"]
                        for arm, c in sorted(stats.per_arm.items())]
            text_parts.append(_render_table(
                f"Output errors ({study})",
                ["Arm", "Runs", "Errors", "Rate"], err_rows))
            errors_bundle[study] = stats.to_dict()
        else:
            errors_bundle[study] = {"no_data": True}

    bundle = {"elo": elo_bundle, "wins": wins_bundle, "errors": errors_bundle}
    (out / "elo.json").write_text(json.dumps(elo_bundle, indent=2))
    (out / "wins.json").write_text(json.dumps(wins_bundle, indent=2))
    (out / "errors.json").write_text(json.dumps(errors_bundle, indent=2))
    (out / "report.txt").write_text("\n\n".join(text_parts) + "\n")
    return bundle
