"""Two-stage mechanism assignment for the top-K bribe-contributing flows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .features import ContractFeatures, FeatureVector, extract_features
from .flows import FlowTable
from .forest import NON_ATOMIC, Forest
from .ingest import Dataset, LabelSet

CATEGORIES = ("protocol", "atomic", "non_atomic", "miscellaneous")
DEFAULT_K = 1000
ATOMIC_LABEL_MAJORITY = 0.5

_FROM_LABEL = {"protocol": "protocol", "atomic": "atomic", "non_atomic": "non_atomic", "other": "miscellaneous"}


@dataclass(frozen=True, slots=True)
class MechanismAssignment:
    rank: int
    contract: str
    total_bribe: int
    mechanism: str
    source: str  # "label", "forest" or "heuristic"
    votes: int | None = None


def classify_top_flows(flows: FlowTable, forest: Forest, labels: LabelSet, k: int = DEFAULT_K, *,
                       dataset: Dataset | None = None,
                       features: Mapping[str, ContractFeatures | FeatureVector] | None = None,
                       ) -> list[MechanismAssignment]:
    """Assign one of :data:`CATEGORIES` to each of the top-``k`` flows.

    Manual labels take precedence. Unlabelled contracts go to the forest;
    those it does not call non-atomic become atomic when more than half of
    their transactions carry an MEV label, and miscellaneous otherwise.
    ``k`` larger than the flow count selects every flow.
    """
    if features is None and dataset is None:
        raise ValueError("classify_top_flows needs either features or the dataset")
    out = []
    for rank, flow in enumerate(flows.ranked()[:max(k, 0)], start=1):
        c = flow.contract
        mech = labels.mechanism(c)
        if mech in _FROM_LABEL:
            out.append(MechanismAssignment(rank, c, flow.total_bribe, _FROM_LABEL[mech], "label"))
            continue
        vec = features[c] if features is not None and c in features else extract_features(dataset, c)
        if isinstance(vec, ContractFeatures):
            vec = vec.vector
        pred = forest.predict(vec)
        if pred.label == NON_ATOMIC:
            out.append(MechanismAssignment(rank, c, flow.total_bribe, "non_atomic", "forest", pred.votes))
        elif vec.mev_label_frequency > ATOMIC_LABEL_MAJORITY:
            out.append(MechanismAssignment(rank, c, flow.total_bribe, "atomic", "heuristic", pred.votes))
        else:
            out.append(MechanismAssignment(rank, c, flow.total_bribe, "miscellaneous", "heuristic", pred.votes))
    return out


def category_counts(assignments) -> dict[str, int]:
    counts = dict.fromkeys(CATEGORIES, 0)
    for a in assignments:
        counts[a.mechanism] += 1
    return counts
