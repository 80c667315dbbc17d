"""
Multi-Criteria Rating Dataset

Ingests (user, item, criterion, value) rating logs, binarizes them into
per-criterion positive interactions, filters sparse users/items, splits
per user into train/valid/test and reports dataset statistics.

Criterion 0 is always the overall rating.
"""

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from src.core.errors import DatasetError, EmptyDatasetError, ParseError, ValidationError
from src.core.seeding import RngStreams

logger = logging.getLogger(__name__)

COLUMNS = ["user", "item", "criterion", "value"]
POSITIVE_RULES = ("median_of_range", "at_least_one", "fixed_threshold")
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
INDEX_FILE = "index.json"
SPLIT_NAMES = ("train", "valid", "test")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class CriterionSpec:
    """Scale and positive rule of one rating criterion"""

    criterion: int
    name: str
    scale_min: float
    scale_max: float
    positive_rule: str = "median_of_range"
    threshold: Optional[float] = None

    def __post_init__(self):
        if not self.scale_min < self.scale_max:
            raise ValidationError(
                f"criterion {self.criterion}: scale_min {self.scale_min} must be < scale_max {self.scale_max}"
            )
        if self.positive_rule not in POSITIVE_RULES:
            raise ValidationError(
                f"criterion {self.criterion}: unknown rule '{self.positive_rule}'"
            )
        if self.positive_rule == "fixed_threshold":
            if self.threshold is None or not self.scale_min <= self.threshold <= self.scale_max:
                raise ValidationError(
                    f"criterion {self.criterion}: threshold {self.threshold} outside "
                    f"[{self.scale_min}, {self.scale_max}]"
                )

    @property
    def cutoff(self) -> float:
        """Smallest value counted as positive"""
        if self.positive_rule == "median_of_range":
            return (self.scale_min + self.scale_max) / 2.0
        if self.positive_rule == "at_least_one":
            return 1.0
        return float(self.threshold)

    def is_positive(self, values: np.ndarray) -> np.ndarray:
        """Boolean mask of values satisfying the rule (inclusive)"""
        return np.asarray(values, dtype=np.float64) >= self.cutoff

    @classmethod
    def from_dict(cls, raw: Dict) -> "CriterionSpec":
        """Build from a spec-file entry {index, name, min, max, rule[, threshold]}"""
        try:
            rule = raw.get("rule", "median_of_range")
            threshold = raw.get("threshold")
            if isinstance(rule, dict):
                threshold = rule.get("fixed_threshold", threshold)
                rule = "fixed_threshold"
            return cls(
                criterion=int(raw["index"]),
                name=str(raw.get("name", f"c{raw['index']}")),
                scale_min=float(raw["min"]),
                scale_max=float(raw["max"]),
                positive_rule=str(rule),
                threshold=None if threshold is None else float(threshold),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"bad criterion spec {raw}: {e}") from e

    def to_dict(self) -> Dict:
        entry = {
            "index": self.criterion,
            "name": self.name,
            "min": self.scale_min,
            "max": self.scale_max,
            "rule": self.positive_rule,
        }
        if self.threshold is not None:
            entry["threshold"] = self.threshold
        return entry


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    item_id: str
    criterion: int
    value: float


@dataclass(frozen=True, eq=False)
class RatingLog:
    """Validated raw rating tuples plus the per-criterion scale metadata"""

    frame: pd.DataFrame
    specs: Tuple[CriterionSpec, ...]

    @property
    def n_criteria(self) -> int:
        """C, the number of criteria excluding overall"""
        return len(self.specs) - 1

    def __len__(self) -> int:
        return len(self.frame)

    def records(self) -> Iterator[RatingRecord]:
        for row in self.frame.itertuples(index=False):
            yield RatingRecord(str(row.user), str(row.item), int(row.criterion), float(row.value))

    def counts_per_criterion(self) -> Dict[int, int]:
        counts = self.frame["criterion"].value_counts()
        return {c: int(counts.get(c, 0)) for c in range(len(self.specs))}

    @classmethod
    def from_records(cls, records: Sequence[RatingRecord], specs: Sequence[CriterionSpec]) -> "RatingLog":
        specs = _check_specs(specs)
        frame = pd.DataFrame(
            [(r.user_id, r.item_id, r.criterion, r.value) for r in records], columns=COLUMNS
        )
        frame = _coerce_frame(frame)
        _validate_ranges(frame, specs, line_numbers=None)
        return cls(frame=frame, specs=specs)

    def write_tsv(self, path: PathLike) -> None:
        self.frame.to_csv(path, sep="\t", header=False, index=False)


@dataclass(frozen=True, eq=False)
class InteractionSet:
    """
    Positive (user, item, criterion) triples over a dense index space.

    Splits of one dataset share user_ids/item_ids so their indices agree.
    """

    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    n_criteria_plus1: int
    users: np.ndarray
    items: np.ndarray
    criteria: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("users", "items", "criteria"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        n = len(self.users)
        if len(self.items) != n or len(self.criteria) != n:
            raise DatasetError("users/items/criteria arrays differ in length")
        if self.weights is not None and len(self.weights) != n:
            raise DatasetError("weights length differs from positives")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.n_users:
                raise DatasetError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.n_items:
                raise DatasetError("item index out of range")
            if self.criteria.min() < 0 or self.criteria.max() >= self.n_criteria_plus1:
                raise DatasetError("criterion index out of range")
            if len(np.unique(self.keys())) != n:
                raise DatasetError("duplicate (user, item, criterion) positives")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.users)

    def keys(self) -> np.ndarray:
        """Unique integer key per (u, i, c) triple"""
        return (self.criteria * self.n_users + self.users) * self.n_items + self.items

    def pair_keys(self) -> np.ndarray:
        """Integer key per (u, i) pair, ignoring the criterion"""
        return self.users * self.n_items + self.items

    def criterion_mask(self, c: int) -> np.ndarray:
        return self.criteria == c

    def positives(self, c: int) -> Set[Tuple[int, int]]:
        """The set N^c as (user, item) index pairs"""
        mask = self.criterion_mask(c)
        return set(zip(self.users[mask].tolist(), self.items[mask].tolist()))

    def user_item_matrix(self, c: int = 0) -> sp.csr_matrix:
        """Binary n_users x n_items matrix of criterion-c positives"""
        mask = self.criterion_mask(c)
        data = np.ones(int(mask.sum()), dtype=np.float64)
        return sp.csr_matrix(
            (data, (self.users[mask], self.items[mask])), shape=(self.n_users, self.n_items)
        )

    def user_items(self, c: int = 0) -> List[np.ndarray]:
        """Sorted criterion-c item indices of every user"""
        mat = self.user_item_matrix(c)
        return [mat.indices[mat.indptr[u]:mat.indptr[u + 1]].copy() for u in range(self.n_users)]

    def overall_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        """Criterion-0 positive counts per user and per item"""
        mask = self.criterion_mask(0)
        return (
            np.bincount(self.users[mask], minlength=self.n_users),
            np.bincount(self.items[mask], minlength=self.n_items),
        )

    def subset(self, mask: np.ndarray) -> "InteractionSet":
        """Same index space, only the positives selected by mask"""
        return InteractionSet(
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            n_criteria_plus1=self.n_criteria_plus1,
            users=self.users[mask],
            items=self.items[mask],
            criteria=self.criteria[mask],
            weights=None if self.weights is None else self.weights[mask],
        )

    def user_index(self) -> Dict[str, int]:
        return {uid: idx for idx, uid in enumerate(self.user_ids)}

    def item_index(self) -> Dict[str, int]:
        return {iid: idx for idx, iid in enumerate(self.item_ids)}


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_overall_ratings: int
    n_mc_ratings: int
    n_criteria: int
    gamma: float

    def to_dict(self) -> Dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "n_overall_ratings": self.n_overall_ratings,
            "n_mc_ratings": self.n_mc_ratings,
            "C": self.n_criteria,
            "gamma": self.gamma,
        }


class DatasetSplits(NamedTuple):
    train: InteractionSet
    valid: InteractionSet
    test: InteractionSet


def _check_specs(specs: Sequence[CriterionSpec]) -> Tuple[CriterionSpec, ...]:
    specs = tuple(sorted(specs, key=lambda s: s.criterion))
    if not specs:
        raise ValidationError("at least the overall criterion spec is required")
    if [s.criterion for s in specs] != list(range(len(specs))):
        raise ValidationError("criterion specs must cover indices 0..C exactly once")
    return specs


def _coerce_frame(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    frame["user"] = frame["user"].astype(str)
    frame["item"] = frame["item"].astype(str)
    frame["criterion"] = frame["criterion"].astype(np.int64)
    frame["value"] = frame["value"].astype(np.float64)
    return frame.reset_index(drop=True)


def _validate_ranges(frame: pd.DataFrame, specs: Tuple[CriterionSpec, ...],
                     line_numbers: Optional[np.ndarray]) -> None:
    def where(pos: int) -> str:
        return f"line {int(line_numbers[pos])}: " if line_numbers is not None else ""

    crit = frame["criterion"].to_numpy()
    bad = np.flatnonzero((crit < 0) | (crit >= len(specs)))
    if len(bad):
        pos = int(bad[0])
        raise ValidationError(
            f"{where(pos)}criterion {crit[pos]} out of range 0..{len(specs) - 1}"
        )
    values = frame["value"].to_numpy()
    lo = np.array([s.scale_min for s in specs])[crit]
    hi = np.array([s.scale_max for s in specs])[crit]
    bad = np.flatnonzero((values < lo) | (values > hi))
    if len(bad):
        pos = int(bad[0])
        raise ValidationError(
            f"{where(pos)}value {values[pos]} outside [{lo[pos]}, {hi[pos]}] "
            f"for criterion {crit[pos]}"
        )


def load_criterion_specs(path: PathLike) -> List[CriterionSpec]:
    """
    Read the criterion spec JSON file

    Args:
        path: JSON list of {index, name, min, max, rule[, threshold]}

    Returns:
        Specs sorted by criterion index
    """
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"cannot read criterion specs {path}: {e}") from e
    if not isinstance(raw, list):
        raise ValidationError("criterion spec file must hold a JSON list")
    return list(_check_specs([CriterionSpec.from_dict(entry) for entry in raw]))


def write_criterion_specs(specs: Sequence[CriterionSpec], path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump([s.to_dict() for s in specs], f, indent=4)


def _read_tsv(path: Path) -> Tuple[pd.DataFrame, np.ndarray]:
    # ids are opaque strings: "NA", "null" or "nan" must stay ids, not missing values
    try:
        raw = pd.read_csv(path, sep=r"\s+", header=None, dtype=str, engine="python",
                          skip_blank_lines=False, keep_default_na=False, na_filter=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=COLUMNS), np.zeros(0, dtype=np.int64)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(str(e), int(match.group(1)) if match else None) from e

    line_numbers = np.arange(1, len(raw) + 1)
    absent = raw.isna() | raw.eq("")
    blank = absent.all(axis=1).to_numpy()
    raw, absent, line_numbers = raw[~blank], absent[~blank], line_numbers[~blank]
    if raw.empty:
        return pd.DataFrame(columns=COLUMNS), np.zeros(0, dtype=np.int64)
    if raw.shape[1] > len(COLUMNS):
        extra = (~absent.iloc[:, len(COLUMNS):]).any(axis=1).to_numpy()
        pos = int(np.flatnonzero(extra)[0])
        raise ParseError(f"expected {len(COLUMNS)} fields", int(line_numbers[pos]))
    if raw.shape[1] == len(COLUMNS):
        missing = absent.any(axis=1).to_numpy()
    else:
        missing = np.ones(len(raw), dtype=bool)
    if missing.any():
        pos = int(np.flatnonzero(missing)[0])
        raise ParseError(f"expected {len(COLUMNS)} fields", int(line_numbers[pos]))
    raw.columns = COLUMNS

    criterion = pd.to_numeric(raw["criterion"], errors="coerce").to_numpy()
    bad = np.flatnonzero(np.isnan(criterion) | (criterion != np.round(criterion)))
    if len(bad):
        raise ParseError(f"criterion '{raw['criterion'].iloc[bad[0]]}' is not an integer",
                         int(line_numbers[bad[0]]))
    value = pd.to_numeric(raw["value"], errors="coerce").to_numpy()
    bad = np.flatnonzero(~np.isfinite(value))
    if len(bad):
        raise ParseError(f"value '{raw['value'].iloc[bad[0]]}' is not a number",
                         int(line_numbers[bad[0]]))
    frame = pd.DataFrame({
        "user": raw["user"].to_numpy(),
        "item": raw["item"].to_numpy(),
        "criterion": criterion.astype(np.int64),
        "value": value,
    })
    return frame, line_numbers


def _read_json_export(path: Path) -> Tuple[pd.DataFrame, np.ndarray]:
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno) from e
    if not isinstance(raw, list):
        raise ParseError("JSON export must be a list of {user, item, ratings}")
    rows = []
    entry_numbers = []
    for n, entry in enumerate(raw, start=1):
        try:
            ratings = entry["ratings"]
            if isinstance(ratings, list):
                ratings = dict(enumerate(ratings))
            for criterion, value in ratings.items():
                if value is None:
                    continue
                rows.append((str(entry["user"]), str(entry["item"]), int(criterion), float(value)))
                entry_numbers.append(n)
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ParseError(f"bad JSON entry: {e}", n) from e
    return pd.DataFrame(rows, columns=COLUMNS), np.asarray(entry_numbers, dtype=np.int64)


def ingest(path: PathLike, specs: Sequence[CriterionSpec]) -> RatingLog:
    """
    Read and validate a multi-criteria rating log

    Args:
        path: Whitespace-separated user/item/criterion/value file, or a
            .json nested export
        specs: One CriterionSpec per criterion, indices 0..C

    Returns:
        RatingLog with every record range-checked
    """
    path = Path(path)
    specs = _check_specs(specs)
    if not path.exists():
        raise DatasetError(f"rating file not found: {path}")

    if path.suffix.lower() == ".json":
        frame, line_numbers = _read_json_export(path)
    else:
        frame, line_numbers = _read_tsv(path)
    frame = _coerce_frame(frame)
    _validate_ranges(frame, specs, line_numbers)

    log = RatingLog(frame=frame, specs=specs)
    for c, count in log.counts_per_criterion().items():
        logger.info("criterion %d (%s): %d ratings", c, specs[c].name, count)
    return log


def binarize(log: RatingLog, specs: Optional[Sequence[CriterionSpec]] = None) -> InteractionSet:
    """
    Turn ratings into positive interactions per criterion

    Args:
        log: Validated rating log
        specs: Rules to apply; defaults to the log's own specs

    Returns:
        InteractionSet over users/items that have at least one positive;
        weights hold the raw rating values
    """
    if len(log) == 0:
        raise EmptyDatasetError("cannot binarize an empty rating log")
    specs = _check_specs(specs if specs is not None else log.specs)

    frame = log.frame
    dup = frame.duplicated(subset=["user", "item", "criterion"], keep="last")
    if dup.any():
        logger.warning("dropping %d duplicate ratings (last one wins)", int(dup.sum()))
        frame = frame[~dup.to_numpy()]

    crit = frame["criterion"].to_numpy()
    cutoffs = np.array([s.cutoff for s in specs])
    positive = frame["value"].to_numpy() >= cutoffs[crit]
    pos = frame[positive]

    user_ids = tuple(sorted(pos["user"].unique()))
    item_ids = tuple(sorted(pos["item"].unique()))
    users = pd.Categorical(pos["user"], categories=user_ids).codes
    items = pd.Categorical(pos["item"], categories=item_ids).codes
    iset = InteractionSet(
        user_ids=user_ids,
        item_ids=item_ids,
        n_criteria_plus1=len(specs),
        users=users,
        items=items,
        criteria=pos["criterion"].to_numpy(),
        weights=pos["value"].to_numpy(),
    )
    logger.info("binarized %d ratings into %d positives (%d users, %d items)",
                len(frame), len(iset), iset.n_users, iset.n_items)
    return iset


def _reindex(iset: InteractionSet, keep_users: np.ndarray, keep_items: np.ndarray) -> InteractionSet:
    mask = keep_users[iset.users] & keep_items[iset.items]
    new_user = np.cumsum(keep_users) - 1
    new_item = np.cumsum(keep_items) - 1
    return InteractionSet(
        user_ids=tuple(u for u, keep in zip(iset.user_ids, keep_users) if keep),
        item_ids=tuple(i for i, keep in zip(iset.item_ids, keep_items) if keep),
        n_criteria_plus1=iset.n_criteria_plus1,
        users=new_user[iset.users[mask]],
        items=new_item[iset.items[mask]],
        criteria=iset.criteria[mask],
        weights=None if iset.weights is None else iset.weights[mask],
    )


def filter_min_interactions(iset: InteractionSet, k: int = 5) -> InteractionSet:
    """
    Iteratively drop users/items with fewer than k overall positives

    Args:
        iset: Interactions to filter
        k: Minimum number of criterion-0 positives per user and per item

    Returns:
        Densely reindexed InteractionSet at the fixed point
    """
    if k < 1:
        raise DatasetError(f"k must be >= 1, got {k}")
    active_u = np.ones(iset.n_users, dtype=bool)
    active_i = np.ones(iset.n_items, dtype=bool)
    overall = iset.criteria == 0
    rounds = 0
    while True:
        live = overall & active_u[iset.users] & active_i[iset.items]
        cu = np.bincount(iset.users[live], minlength=iset.n_users)
        ci = np.bincount(iset.items[live], minlength=iset.n_items)
        new_u = active_u & (cu >= k)
        new_i = active_i & (ci >= k)
        rounds += 1
        if np.array_equal(new_u, active_u) and np.array_equal(new_i, active_i):
            break
        active_u, active_i = new_u, new_i

    if not active_u.any() or not active_i.any():
        raise EmptyDatasetError(f"no users/items left with >= {k} overall positives")
    result = _reindex(iset, active_u, active_i)
    logger.info("min-interaction filter k=%d: %d -> %d users, %d -> %d items (%d rounds)",
                k, iset.n_users, result.n_users, iset.n_items, result.n_items, rounds)
    return result


def split(iset: InteractionSet, ratios: Sequence[float] = DEFAULT_RATIOS,
          seed: int = 0) -> DatasetSplits:
    """
    Per-user random train/valid/test split of overall positives

    Valid/test sizes are floor(n * ratio); the remainder goes to train.
    A side-criterion positive is dropped when its (u, i) overall positive
    lands in valid or test, otherwise it stays in train.

    Args:
        iset: Interactions to split
        ratios: (train, valid, test) fractions summing to 1
        seed: Split seed

    Returns:
        DatasetSplits sharing iset's index space
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DatasetError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    rng = RngStreams(seed).fresh("split")

    overall_idx = np.flatnonzero(iset.criteria == 0)
    order = overall_idx[np.lexsort((iset.items[overall_idx], iset.users[overall_idx]))]
    owners = iset.users[order]
    bounds = np.searchsorted(owners, np.arange(iset.n_users + 1))

    assignment = np.zeros(len(iset), dtype=np.int8)  # 0 train, 1 valid, 2 test
    for u in range(iset.n_users):
        rows = order[bounds[u]:bounds[u + 1]]
        n = len(rows)
        if n == 0:
            continue
        n_valid = int(math.floor(n * ratios[1] + 1e-9))
        n_test = int(math.floor(n * ratios[2] + 1e-9))
        n_train = n - n_valid - n_test
        perm = rows[rng.permutation(n)]
        assignment[perm[n_train:n_train + n_valid]] = 1
        assignment[perm[n_train + n_valid:]] = 2

    overall = iset.criteria == 0
    held_out = iset.pair_keys()[overall & (assignment > 0)]
    side = ~overall
    leaked = side & np.isin(iset.pair_keys(), held_out)
    if leaked.any():
        logger.debug("dropping %d side positives of held-out pairs", int(leaked.sum()))

    train = iset.subset((overall & (assignment == 0)) | (side & ~leaked))
    valid = iset.subset(overall & (assignment == 1))
    test = iset.subset(overall & (assignment == 2))
    logger.info("split %s: train %d, valid %d, test %d positives",
                ratios, len(train), len(valid), len(test))
    return DatasetSplits(train, valid, test)


def stats(iset: InteractionSet) -> DatasetStats:
    """Counts and gamma = n_mc / n_overall"""
    n_overall = int(np.count_nonzero(iset.criteria == 0))
    if n_overall == 0:
        raise EmptyDatasetError("no overall positives: gamma is undefined")
    n_mc = len(iset)
    return DatasetStats(
        n_users=iset.n_users,
        n_items=iset.n_items,
        n_overall_ratings=n_overall,
        n_mc_ratings=n_mc,
        n_criteria=iset.n_criteria_plus1 - 1,
        gamma=n_mc / n_overall,
    )


def restrict_criteria(iset: InteractionSet, k: int) -> InteractionSet:
    """Keep criteria 0..k-1 only (criteria-count ablation)"""
    if not 1 <= k <= iset.n_criteria_plus1:
        raise DatasetError(f"criteria count must be in 1..{iset.n_criteria_plus1}, got {k}")
    kept = iset.subset(iset.criteria < k)
    return InteractionSet(
        user_ids=kept.user_ids,
        item_ids=kept.item_ids,
        n_criteria_plus1=k,
        users=kept.users,
        items=kept.items,
        criteria=kept.criteria,
        weights=kept.weights,
    )


def write_interactions(iset: InteractionSet, path: PathLike) -> None:
    """Write positives as user/item/criterion/value TSV"""
    values = iset.weights if iset.weights is not None else np.ones(len(iset))
    frame = pd.DataFrame({
        "user": np.asarray(iset.user_ids, dtype=object)[iset.users],
        "item": np.asarray(iset.item_ids, dtype=object)[iset.items],
        "criterion": iset.criteria,
        "value": values,
    })
    frame.to_csv(path, sep="\t", header=False, index=False)


def read_interactions(path: PathLike, user_ids: Optional[Sequence[str]] = None,
                      item_ids: Optional[Sequence[str]] = None,
                      n_criteria_plus1: Optional[int] = None) -> InteractionSet:
    """
    Read a positives TSV written by write_interactions

    Args:
        path: TSV file
        user_ids: Fixed user index; None derives it from the file
        item_ids: Fixed item index; None derives it from the file
        n_criteria_plus1: Criterion count; None derives it from the file

    Returns:
        InteractionSet in the given (or derived) index space
    """
    frame, line_numbers = _read_tsv(Path(path))
    frame = _coerce_frame(frame)
    user_ids = tuple(user_ids) if user_ids is not None else tuple(sorted(frame["user"].unique()))
    item_ids = tuple(item_ids) if item_ids is not None else tuple(sorted(frame["item"].unique()))
    if n_criteria_plus1 is None:
        n_criteria_plus1 = int(frame["criterion"].max()) + 1 if len(frame) else 1
    users = pd.Categorical(frame["user"], categories=user_ids).codes.astype(np.int64)
    items = pd.Categorical(frame["item"], categories=item_ids).codes.astype(np.int64)
    unknown = np.flatnonzero((users < 0) | (items < 0))
    if len(unknown):
        raise ValidationError(f"line {int(line_numbers[unknown[0]])}: user/item not in index")
    return InteractionSet(
        user_ids=user_ids,
        item_ids=item_ids,
        n_criteria_plus1=n_criteria_plus1,
        users=users,
        items=items,
        criteria=frame["criterion"].to_numpy(),
        weights=frame["value"].to_numpy(),
    )


def save_splits(splits: DatasetSplits, directory: PathLike) -> List[Path]:
    """Write train/valid/test TSVs plus the shared index.json"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train = splits.train
    index_path = directory / INDEX_FILE
    with open(index_path, "w") as f:
        json.dump({
            "users": list(train.user_ids),
            "items": list(train.item_ids),
            "n_criteria_plus1": train.n_criteria_plus1,
        }, f)
    written = [index_path]
    for name, iset in zip(SPLIT_NAMES, splits):
        path = directory / f"{name}.tsv"
        write_interactions(iset, path)
        written.append(path)
    return written


def load_splits(directory: PathLike) -> DatasetSplits:
    """Read a split directory written by save_splits"""
    directory = Path(directory)
    index_path = directory / INDEX_FILE
    if not index_path.exists():
        raise DatasetError(f"missing {INDEX_FILE} in {directory}")
    with open(index_path, "r") as f:
        index = json.load(f)
    parts = [
        read_interactions(directory / f"{name}.tsv", index["users"], index["items"],
                          index["n_criteria_plus1"])
        for name in SPLIT_NAMES
    ]
    return DatasetSplits(*parts)


def write_stats(ds: DatasetStats, path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump(ds.to_dict(), f, indent=4)
