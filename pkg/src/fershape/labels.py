"""Expression class tokens in their fixed canonical order."""

from .errors import LabelError

CLASSES = ("AN", "NE", "DI", "FE", "HA", "SA", "SU")
NEUTRAL = "NE"

_INDEX = {c: i for i, c in enumerate(CLASSES)}


def class_index(label: str) -> int:
    try:
        return _INDEX[label]
    except KeyError:
        raise LabelError(f"unknown expression label {label!r}; expected one of {', '.join(CLASSES)}") from None


def canonical_sorted(labels) -> list[str]:
    """Distinct labels from ``labels`` in canonical order."""
    return sorted(set(labels), key=class_index)
