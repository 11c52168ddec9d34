"""Per-node label bookkeeping for transductive runs.

Each node is either given (from the tiny labelled set), pseudo (promoted
with a confidence) or unknown.  Given labels are immutable for the lifetime
of a run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["GIVEN", "PSEUDO", "UNKNOWN", "LabelState"]

GIVEN = "given"
PSEUDO = "pseudo"
UNKNOWN = "unknown"


class LabelState:
    """Label assignment for n nodes over L classes."""

    def __init__(self, n: int, classes: int):
        if classes < 2:
            raise ValueError("need at least two classes")
        self.n = n
        self.classes = classes
        self.y = np.full(n, -1, dtype=int)
        self.source = np.array([UNKNOWN] * n, dtype=object)
        self.confidence = np.zeros(n)

    @classmethod
    def from_given(cls, labels, classes: int) -> "LabelState":
        """Build from a length-n vector with -1 marking unlabelled nodes."""
        labels = np.asarray(labels, dtype=int)
        st = cls(labels.shape[0], classes)
        for i, y in enumerate(labels):
            if y >= 0:
                st.set_given(i, int(y))
        return st

    def set_given(self, i: int, y: int):
        if not 0 <= y < self.classes:
            raise ValueError(f"class {y} out of range")
        self.y[i] = y
        self.source[i] = GIVEN
        self.confidence[i] = 1.0

    def set_pseudo(self, i: int, y: int, confidence: float):
        if self.source[i] == GIVEN:
            raise ValueError(f"node {i} has a given label; cannot overwrite")
        if not 0.0 <= confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        self.y[i] = y
        self.source[i] = PSEUDO
        self.confidence[i] = confidence

    @property
    def given_mask(self) -> np.ndarray:
        return self.source == GIVEN

    @property
    def pseudo_mask(self) -> np.ndarray:
        return self.source == PSEUDO

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.source != UNKNOWN

    def class_members(self, l: int, include_pseudo: bool = True) -> np.ndarray:
        mask = (self.y == l) & (self.labeled_mask if include_pseudo else self.given_mask)
        return np.where(mask)[0]

    def require_given_per_class(self):
        for l in range(self.classes):
            if self.class_members(l, include_pseudo=False).size == 0:
                raise ValueError(f"class {l} has no given label")

    def drop_pseudo(self) -> "LabelState":
        """Fresh copy keeping only the given labels."""
        st = LabelState(self.n, self.classes)
        for i in np.where(self.given_mask)[0]:
            st.set_given(int(i), int(self.y[i]))
        return st

    def copy(self) -> "LabelState":
        st = LabelState(self.n, self.classes)
        st.y = self.y.copy()
        st.source = self.source.copy()
        st.confidence = self.confidence.copy()
        return st

    def counts(self) -> dict:
        return {
            "given": int(self.given_mask.sum()),
            "pseudo": int(self.pseudo_mask.sum()),
            "unknown": int((~self.labeled_mask).sum()),
        }
