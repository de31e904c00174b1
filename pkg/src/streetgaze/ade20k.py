"""The 150-class object taxonomy used by segmentation maps and metric vectors."""

from __future__ import annotations

from importlib import resources

N_CLASSES = 150
UNLABELED = 255  # sentinel pixel value in segmentation PNGs


def _load_names() -> tuple[str, ...]:
    text = (
        resources.files("streetgaze.data")
        .joinpath("ade20k_labels_v1.txt")
        .read_text(encoding="utf-8")
    )
    names = [ln.strip() for ln in text.splitlines()
             if ln.strip() and not ln.startswith("#")]
    if len(names) != N_CLASSES:
        raise RuntimeError(f"label table has {len(names)} entries, expected {N_CLASSES}")
    return tuple(names)


CLASS_NAMES: tuple[str, ...] = _load_names()
CLASS_INDEX: dict[str, int] = {name: i for i, name in enumerate(CLASS_NAMES)}


def class_name(index: int) -> str:
    if not 0 <= index < N_CLASSES:
        raise IndexError(f"class index {index} out of range [0, {N_CLASSES})")
    return CLASS_NAMES[index]
